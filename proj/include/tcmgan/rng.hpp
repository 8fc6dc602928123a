#ifndef TCMGAN_RNG_HPP
#define TCMGAN_RNG_HPP

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace tcmgan {

// Deterministic random source. The raw stream is std::mt19937_64 (bit-exact
// by the standard); uniform/normal/int draws are implemented here rather than
// with std:: distributions, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (0, 1]; safe as a log() argument.
    double uniform_open0() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller, one spare cached.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n) by 128-bit multiply-shift.
    int uniform_int(int n);

    std::vector<int> permutation(int n);

    void fill_normal(double* dst, std::size_t n, double mean, double stddev);

    // Textual state round-trip (for checkpoints).
    std::string serialize() const;
    static Rng deserialize(const std::string& s);

    bool operator==(const Rng& o) const {
        return gen_ == o.gen_ && has_spare_ == o.has_spare_ && spare_ == o.spare_;
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tcmgan

#endif
