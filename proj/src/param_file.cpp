#include "esvforge/param_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "esvforge/error.hpp"

namespace esvforge {

namespace {

constexpr char kMagic[8] = {'E', 'S', 'V', 'H', 'E', 'A', 'D', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return std::bit_cast<double>(bits);
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return limit_ - pos_; }

private:
    void need(std::size_t n) const {
        if (n > limit_ - pos_) throw Error(ErrorCode::IoFailure, "parameter file truncated");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t limit_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

Matrix column(const std::vector<double>& v) { return Matrix(v.size(), 1, v); }

std::vector<double> as_vector(const TensorMap& t, const std::string& name) {
    const auto it = t.find(name);
    if (it == t.end()) throw Error(ErrorCode::SchemaError, "parameter file lacks tensor " + name);
    if (it->second.cols() != 1) throw Error(ErrorCode::DimensionMismatch, "tensor " + name + " must be n x 1");
    return it->second.data();
}

const Matrix& as_matrix(const TensorMap& t, const std::string& name) {
    const auto it = t.find(name);
    if (it == t.end()) throw Error(ErrorCode::SchemaError, "parameter file lacks tensor " + name);
    return it->second;
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kParamFileVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(m.rows()));
        put_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (double v : m.data()) put_f64(out, v);
    }
    put_u32(out, crc_of(out.data(), out.size()));
    return out;
}

TensorMap decode_tensors(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof kMagic + 12 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw Error(ErrorCode::IoFailure, "not a head parameter file");
    }
    const std::size_t body = bytes.size() - 4;
    Reader trailer(bytes, bytes.size());
    trailer.text(body);
    if (trailer.u32() != crc_of(bytes.data(), body)) {
        throw Error(ErrorCode::IoFailure, "parameter file checksum mismatch");
    }

    Reader in(bytes, body);
    in.text(sizeof kMagic);
    if (const auto version = in.u32(); version != kParamFileVersion) {
        throw Error(ErrorCode::VersionMismatch, "parameter file version " + std::to_string(version) + " unsupported");
    }
    const auto count = in.u32();
    TensorMap out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name = in.text(in.u32());
        const std::size_t rows = in.u32();
        const std::size_t cols = in.u32();
        if (rows * cols > in.remaining() / 8) throw Error(ErrorCode::IoFailure, "parameter file truncated");
        std::vector<double> data(rows * cols);
        for (auto& v : data) v = in.f64();
        out.emplace(name, Matrix(rows, cols, std::move(data)));
    }
    if (in.remaining() != 0) throw Error(ErrorCode::IoFailure, "trailing bytes in parameter file");
    return out;
}

TensorMap to_tensors(const HeadParams& params) {
    params.validate();
    TensorMap t;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto prefix = "lstm." + std::to_string(l) + ".";
        t[prefix + "weight_ih"] = params.layers[l].weight_ih;
        t[prefix + "weight_hh"] = params.layers[l].weight_hh;
        t[prefix + "bias"] = column(params.layers[l].bias);
    }
    t["attention.weight"] = column(params.attention);
    t["head.weight"] = params.output;
    t["norm.mean"] = column(params.norm_mean);
    t["norm.var"] = column(params.norm_var);
    t["norm.scale"] = column(params.norm_scale);
    t["norm.shift"] = column(params.norm_shift);
    t["norm.eps"] = Matrix(1, 1, std::vector<double>{params.norm_eps});
    return t;
}

HeadParams from_tensors(const TensorMap& t) {
    HeadParams p;
    for (std::size_t l = 0;; ++l) {
        const auto prefix = "lstm." + std::to_string(l) + ".";
        if (!t.count(prefix + "weight_ih")) break;
        p.layers.push_back({as_matrix(t, prefix + "weight_ih"), as_matrix(t, prefix + "weight_hh"),
                            as_vector(t, prefix + "bias")});
    }
    p.attention = as_vector(t, "attention.weight");
    p.output = as_matrix(t, "head.weight");
    p.norm_mean = as_vector(t, "norm.mean");
    p.norm_var = as_vector(t, "norm.var");
    p.norm_scale = as_vector(t, "norm.scale");
    p.norm_shift = as_vector(t, "norm.shift");
    const auto eps = as_vector(t, "norm.eps");
    if (eps.size() != 1) throw Error(ErrorCode::DimensionMismatch, "norm.eps must be 1 x 1");
    p.norm_eps = eps[0];
    p.validate();
    return p;
}

void save_params(const HeadParams& params, const std::filesystem::path& path) {
    const auto bytes = encode_tensors(to_tensors(params));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

HeadParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_tensors(decode_tensors(bytes));
}

}  // namespace esvforge
