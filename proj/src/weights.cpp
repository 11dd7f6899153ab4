#include "repcoach/weights.hpp"

#include "repcoach/errors.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <set>

namespace repcoach {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'P', 'M', 'L'};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("weight write failed");
    }
    template <typename U>
    void little(U v) {
        std::array<unsigned char, sizeof(U)> buf;
        for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        bytes(buf.data(), buf.size());
    }
    void f32(float v) { little(std::bit_cast<std::uint32_t>(v)); }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    const char* take(std::size_t n) {
        if (n > data_.size() - pos_) throw FormatError("truncated weight file");
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <typename U>
    U little() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(sizeof(U)));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
        return v;
    }
    float f32() { return std::bit_cast<float>(little<std::uint32_t>()); }
    std::string str(std::size_t n) { return std::string(take(n), n); }
    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::int64_t Tensor::element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> ModelWeights::manifest() const {
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
    for (const auto& [name, t] : tensors) out.emplace_back(name, t.shape);
    return out;
}

void save_weights_ordered(const ModelWeights& weights, const std::vector<std::string>& order, std::ostream& out) {
    if (order.size() != weights.tensors.size()) throw ValidationError("manifest order does not cover every tensor");
    std::uint64_t elements = 0;
    for (const auto& name : order) {
        const auto it = weights.tensors.find(name);
        if (it == weights.tensors.end()) throw ValidationError("unknown tensor in manifest order: " + name);
        if (it->second.element_count() != static_cast<std::int64_t>(it->second.data.size())) {
            throw ValidationError("tensor '" + name + "' shape does not match its data");
        }
        elements += it->second.data.size();
    }
    Writer w(out);
    w.bytes(kMagic.data(), kMagic.size());
    w.little<std::uint32_t>(weights.version);
    w.little<std::uint32_t>(static_cast<std::uint32_t>(weights.metadata.size()));
    w.bytes(weights.metadata.data(), weights.metadata.size());
    w.little<std::uint32_t>(static_cast<std::uint32_t>(order.size()));
    for (const auto& name : order) {
        const auto& t = weights.tensors.at(name);
        w.little<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.little<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.little<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.little<std::uint64_t>(elements);
    for (const auto& name : order) {
        for (float v : weights.tensors.at(name).data) w.f32(v);
    }
}

void save_weights(const ModelWeights& weights, std::ostream& out) {
    std::vector<std::string> order;
    for (const auto& [name, t] : weights.tensors) order.push_back(name);
    save_weights_ordered(weights, order, out);
}

ModelWeights load_weights(std::istream& in) {
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes));
    const auto magic = r.str(4);
    if (magic != std::string(kMagic.data(), kMagic.size())) throw FormatError("bad magic, not an RPML file");
    ModelWeights w;
    w.version = r.little<std::uint32_t>();
    if (w.version > kWeightsVersion) {
        throw VersionError("weight file version " + std::to_string(w.version) + " is newer than supported " +
                           std::to_string(kWeightsVersion));
    }
    if (w.version == 0) throw FormatError("invalid weight file version 0");
    w.metadata = r.str(r.little<std::uint32_t>());
    const auto count = r.little<std::uint32_t>();
    std::vector<std::pair<std::string, Tensor>> manifest;
    std::set<std::string> seen;
    std::uint64_t expected = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = r.str(r.little<std::uint32_t>());
        if (!seen.insert(name).second) throw ValidationError("duplicate tensor name '" + name + "'");
        Tensor t;
        const auto rank = r.little<std::uint32_t>();
        if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank");
        for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.little<std::uint32_t>());
        expected += static_cast<std::uint64_t>(t.element_count());
        manifest.emplace_back(std::move(name), std::move(t));
    }
    const auto elements = r.little<std::uint64_t>();
    if (elements != expected) {
        throw ValidationError("manifest describes " + std::to_string(expected) + " elements but data holds " +
                              std::to_string(elements));
    }
    if (r.remaining() / 4 < elements) throw FormatError("truncated weight file");
    for (auto& [name, t] : manifest) {
        t.data.resize(static_cast<std::size_t>(t.element_count()));
        for (auto& v : t.data) v = r.f32();
    }
    if (!r.done()) throw FormatError("trailing bytes after tensor data");
    for (auto& [name, t] : manifest) w.tensors.emplace(std::move(name), std::move(t));
    return w;
}

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    save_weights(weights, out);
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return load_weights(in);
}

}  // namespace repcoach
