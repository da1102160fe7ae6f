#include "stim/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

namespace stim {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'T', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + 4 > in.size()) {
        throw Error("tensor file truncated");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
    }
    pos += 4;
    return v;
}

}  // namespace

std::size_t Tensor::element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t d) { return a * d; });
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
    if (tensor.values.size() != tensor.element_count()) {
        throw Error("tensor payload does not match dims");
    }
    std::vector<std::uint8_t> out;
    out.reserve(12 + 4 * tensor.dims.size() + 4 * tensor.values.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, kTensorFileVersion);
    put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (std::uint32_t d : tensor.dims) put_u32(out, d);
    for (float f : tensor.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error("not an STTK tensor file");
    }
    std::size_t pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kTensorFileVersion) {
        throw Error("unsupported STTK version " + std::to_string(version));
    }
    Tensor t;
    const std::uint32_t rank = get_u32(bytes, pos);
    t.dims.reserve(rank);
    for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes, pos));
    const std::size_t n = t.element_count();
    if (bytes.size() - pos != 4 * n) {
        throw Error("STTK payload length does not match dims");
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = std::bit_cast<float>(get_u32(bytes, pos));
    return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    const auto bytes = encode_tensor(tensor);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes);
}

Tensor to_tensor(const Matrix& m) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.values.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.values.push_back(static_cast<float>(m(r, c)));
    return t;
}

Tensor to_tensor(const RowVector& v) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    for (Eigen::Index i = 0; i < v.size(); ++i) t.values.push_back(static_cast<float>(v(i)));
    return t;
}

Matrix matrix_from_tensor(const Tensor& t) {
    if (t.dims.size() == 1) {
        Matrix m(1, t.dims[0]);
        for (std::uint32_t i = 0; i < t.dims[0]; ++i) m(0, i) = t.values[i];
        return m;
    }
    if (t.dims.size() != 2) {
        throw Error("expected a rank-2 tensor");
    }
    Matrix m(t.dims[0], t.dims[1]);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[k++];
    return m;
}

Tensor to_tensor(const Video& video) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(video.frames), static_cast<std::uint32_t>(video.height),
              static_cast<std::uint32_t>(video.width), 3u};
    t.values.assign(video.pixels.begin(), video.pixels.end());
    return t;
}

Video video_from_tensor(const Tensor& t) {
    if (t.dims.size() != 4 || t.dims[3] != 3) {
        throw Error("expected a [T][H][W][3] video tensor");
    }
    Video v(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
    std::copy(t.values.begin(), t.values.end(), v.pixels.begin());
    return v;
}

Tensor to_tensor(const TokenGrid& grid) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(grid.n_t), static_cast<std::uint32_t>(grid.n_s),
              static_cast<std::uint32_t>(grid.channels())};
    t.values.reserve(static_cast<std::size_t>(grid.data.size()));
    for (Eigen::Index r = 0; r < grid.data.rows(); ++r)
        for (Eigen::Index c = 0; c < grid.data.cols(); ++c) t.values.push_back(static_cast<float>(grid.data(r, c)));
    return t;
}

TokenGrid grid_from_tensor(const Tensor& t) {
    if (t.dims.size() != 3) {
        throw Error("expected a [n_t][n_s][C] token tensor");
    }
    TokenGrid g(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < g.data.rows(); ++r)
        for (Eigen::Index c = 0; c < g.data.cols(); ++c) g.data(r, c) = t.values[k++];
    return g;
}

}  // namespace stim
