#pragma once

#include "repcoach/rng.hpp"
#include "repcoach/session_io.hpp"

#include <filesystem>
#include <string>

namespace repcoach::test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
        path_ = std::filesystem::temp_directory_path() / ("repcoach-" + tag + "-" + std::to_string(rng.next() % 1000000007));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Irregularly sampled session with awkward values (tiny, huge, negative, integral).
inline Session random_session(Rng& rng, int samples, int markers) {
    Session s;
    double t = rng.uniform(0.0, 1000.0);
    for (int i = 0; i < samples; ++i) {
        RawSample r;
        r.t = t;
        for (int c = 0; c < 6; ++c) {
            switch (rng.index(4)) {
                case 0: r.values[c] = rng.normal() * 1e-12; break;
                case 1: r.values[c] = rng.normal() * 1e9; break;
                case 2: r.values[c] = static_cast<double>(static_cast<int>(rng.index(200)) - 100); break;
                default: r.values[c] = rng.normal() * 9.81; break;
            }
        }
        s.samples.push_back(r);
        t += rng.index(10) == 0 ? 0.0 : rng.uniform(0.001, 0.02);
    }
    const double lo = s.samples.front().t, hi = s.samples.back().t;
    double m = lo;
    for (int i = 0; i < markers; ++i) {
        m += (hi - lo) / (markers + 1) * rng.uniform(0.5, 1.0);
        s.markers.push_back(m);
    }
    s.meta["participant"] = "p" + std::to_string(rng.index(100));
    s.meta["location"] = "gym";
    return s;
}

}  // namespace repcoach::test
