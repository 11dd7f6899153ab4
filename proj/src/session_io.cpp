#include "repcoach/session_io.hpp"

#include "repcoach/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace repcoach {

namespace {

constexpr std::string_view kHeader = "timestamp,ax,ay,az,gx,gy,gz";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

double parse_double(std::string_view field, std::size_t line, std::string_view name) {
    field = trim(field);
    double value = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (field.empty() || ec != std::errc{} || ptr != end) {
        throw ParseError("non-numeric field '" + std::string(name) + "': '" + std::string(field) + "'", line);
    }
    if (!std::isfinite(value)) {
        throw ParseError("non-finite field '" + std::string(name) + "'", line);
    }
    return value;
}

class CountingWriter {
public:
    explicit CountingWriter(std::ostream& os) : os_(os) {}
    void put(std::string_view text) {
        os_.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!os_) throw IoError("write failed");
        bytes_ += text.size();
    }
    std::size_t bytes() const { return bytes_; }

private:
    std::ostream& os_;
    std::size_t bytes_ = 0;
};

}  // namespace

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    std::string out(buf, ptr);
    if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
    return out;
}

void validate_session(const Session& session) {
    const auto& s = session.samples;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i].t) || !s[i].values.allFinite()) {
            throw ValidationError("sample " + std::to_string(i) + " has a non-finite value");
        }
        if (i > 0 && s[i].t < s[i - 1].t) {
            throw ValidationError("samples not sorted by time at index " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < session.markers.size(); ++i) {
        const double m = session.markers[i];
        if (!std::isfinite(m)) throw ValidationError("non-finite marker");
        if (i > 0 && m <= session.markers[i - 1]) {
            throw ValidationError("markers not strictly increasing at index " + std::to_string(i));
        }
        if (!s.empty() && (m < s.front().t || m > s.back().t)) {
            throw ValidationError("marker " + format_number(m) + " outside recorded time range");
        }
    }
}

std::size_t encode_session(const Session& session, std::ostream& csv, std::ostream& markers,
                           std::ostream& meta) {
    validate_session(session);
    CountingWriter c(csv), m(markers), k(meta);
    c.put(kHeader);
    c.put("\n");
    std::string row;
    for (const auto& sample : session.samples) {
        row = format_number(sample.t);
        for (int ch = 0; ch < 6; ++ch) {
            row += ',';
            row += format_number(sample.values[ch]);
        }
        row += '\n';
        c.put(row);
    }
    for (double t : session.markers) {
        m.put(format_number(t));
        m.put("\n");
    }
    for (const auto& [key, value] : session.meta) {
        if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
            throw ValidationError("metadata key/value contains a reserved character: " + key);
        }
        k.put(key + "=" + value + "\n");
    }
    return c.bytes() + m.bytes() + k.bytes();
}

Session decode_session(std::istream& csv) { return decode_session(csv, nullptr, nullptr); }

Session decode_session(std::istream& csv, std::istream* markers, std::istream* meta) {
    Session session;
    std::string line;
    if (!std::getline(csv, line) || trim(line) != kHeader) {
        throw FormatError("missing or wrong CSV header, expected '" + std::string(kHeader) + "'");
    }
    std::size_t line_no = 1;
    static constexpr std::string_view names[] = {"timestamp", "ax", "ay", "az", "gx", "gy", "gz"};
    while (std::getline(csv, line)) {
        ++line_no;
        std::string_view rest = trim(line);
        if (rest.empty()) continue;
        RawSample sample;
        int field = 0;
        while (true) {
            const auto comma = rest.find(',');
            const auto token = rest.substr(0, comma);
            if (field >= 7) throw ParseError("too many columns", line_no);
            const double v = parse_double(token, line_no, names[field]);
            if (field == 0) {
                sample.t = v;
            } else {
                sample.values[field - 1] = v;
            }
            ++field;
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (field != 7) {
            throw ParseError("expected 7 columns, got " + std::to_string(field), line_no);
        }
        if (!session.samples.empty() && sample.t < session.samples.back().t) {
            throw ValidationError("line " + std::to_string(line_no) + ": timestamp " + format_number(sample.t) +
                                  " decreases");
        }
        session.samples.push_back(sample);
    }
    if (markers) {
        std::size_t n = 0;
        while (std::getline(*markers, line)) {
            ++n;
            if (trim(line).empty()) continue;
            session.markers.push_back(parse_double(line, n, "marker"));
        }
    }
    if (meta) {
        std::size_t n = 0;
        while (std::getline(*meta, line)) {
            ++n;
            auto text = trim(line);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string_view::npos) throw ParseError("metadata line without '='", n);
            session.meta.emplace(std::string(text.substr(0, eq)), std::string(text.substr(eq + 1)));
        }
    }
    validate_session(session);
    return session;
}

SessionPaths SessionPaths::from_base(const std::filesystem::path& base) {
    auto with = [&](const char* ext) {
        auto p = base;
        p += ext;
        return p;
    };
    return {with(".csv"), with(".markers"), with(".meta")};
}

std::size_t write_session(const Session& session, const std::filesystem::path& base) {
    const auto paths = SessionPaths::from_base(base);
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    std::ofstream csv(paths.csv, std::ios::binary), markers(paths.markers, std::ios::binary),
        meta(paths.meta, std::ios::binary);
    if (!csv || !markers || !meta) throw IoError("cannot open session files for writing: " + base.string());
    const auto bytes = encode_session(session, csv, markers, meta);
    csv.flush();
    markers.flush();
    meta.flush();
    if (!csv || !markers || !meta) throw IoError("write failed: " + base.string());
    return bytes;
}

Session read_session(const std::filesystem::path& base) {
    const auto paths = SessionPaths::from_base(base);
    std::ifstream csv(paths.csv, std::ios::binary);
    if (!csv) throw IoError("cannot open " + paths.csv.string());
    std::ifstream markers(paths.markers, std::ios::binary), meta(paths.meta, std::ios::binary);
    return decode_session(csv, markers ? &markers : nullptr, meta ? &meta : nullptr);
}

std::vector<std::filesystem::path> list_sessions(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            auto base = entry.path();
            base.replace_extension();
            out.push_back(base);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace repcoach
