// bundleheat - per-path random number streams
#pragma once

#include <cstdint>
#include <random>

namespace bundleheat {

// SplitMix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Stream-splitting rule: the path with global index i under master seed s is
// driven by mt19937_64 seeded with splitmix64(splitmix64(s) ^ splitmix64(i+1)).
// Every estimator derives path streams this way, so results do not depend on
// the number of worker threads.
inline std::uint64_t path_stream_seed(std::uint64_t master, std::uint64_t path_index) {
    return splitmix64(splitmix64(master) ^ splitmix64(path_index + 1));
}

class PathRng {
  public:
    explicit PathRng(std::uint64_t stream_seed) : eng_(stream_seed) {}

    // standard normal
    double gauss() { return normal_(eng_); }

    // uniform on (0,1], never returns 0 (feeds a log())
    double uniform_pos() {
        double u = unif_(eng_);
        while (u <= 0.0) u = unif_(eng_);
        return u;
    }

  private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace bundleheat
