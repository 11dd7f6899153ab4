#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace repcoach {

/// Six IMU channels in (ax, ay, az, gx, gy, gz) order. Acceleration in m/s², angular rate in rad/s.
using Channels6 = Eigen::Matrix<double, 6, 1>;

struct RawSample {
    double t = 0.0;  // seconds
    Channels6 values = Channels6::Zero();

    bool operator==(const RawSample&) const = default;
};

struct Session {
    std::vector<RawSample> samples;
    std::vector<double> markers;  // end-of-rep timestamps, seconds
    std::map<std::string, std::string> meta;
};

/// Throws ValidationError when samples are unsorted, values are non-finite, or markers are
/// out of order / outside the recorded time range.
void validate_session(const Session& session);

/// Writes the three text streams of a session. Returns the total number of bytes written.
std::size_t encode_session(const Session& session, std::ostream& csv, std::ostream& markers,
                           std::ostream& meta);

/// Parses the CSV body; markers and metadata streams are optional.
Session decode_session(std::istream& csv);
Session decode_session(std::istream& csv, std::istream* markers, std::istream* meta);

/// File triplet `<base>.csv`, `<base>.markers`, `<base>.meta`.
struct SessionPaths {
    std::filesystem::path csv, markers, meta;
    static SessionPaths from_base(const std::filesystem::path& base);
};

std::size_t write_session(const Session& session, const std::filesystem::path& base);
Session read_session(const std::filesystem::path& base);

/// Basenames (without extension) of every `*.csv` session in a directory, sorted.
std::vector<std::filesystem::path> list_sessions(const std::filesystem::path& dir);

/// Shortest decimal text that parses back to the same double; integral values keep a ".0".
std::string format_number(double value);

}  // namespace repcoach
