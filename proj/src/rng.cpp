#include "tcmgan/rng.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "tcmgan/errors.hpp"

namespace tcmgan {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open0();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw ValueError("uniform_int: n must be positive");
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >> 64);
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        int j = uniform_int(i + 1);
        std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
    }
    return p;
}

void Rng::fill_normal(double* dst, std::size_t n, double mean, double stddev) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = normal(mean, stddev);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << gen_ << " " << (has_spare_ ? 1 : 0) << " ";
    os.precision(17);
    os << spare_;
    return os.str();
}

Rng Rng::deserialize(const std::string& s) {
    Rng r;
    std::istringstream is(s);
    int has = 0;
    is >> r.gen_ >> has >> r.spare_;
    if (!is) throw FormatError("bad rng state string");
    r.has_spare_ = has != 0;
    return r;
}

}  // namespace tcmgan
