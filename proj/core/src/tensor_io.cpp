#include "hpx/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace hpx {

namespace {

constexpr std::array<char, 4> kMagic{'H', 'P', 'X', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                         static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw Error("HPX1: truncated header");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string read_token(std::istream& is) {
    std::string tok;
    char ch = 0;
    while (is.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(is, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) {
                break;
            }
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

}  // namespace

void write_hpx1(std::ostream& os, const Tensor& t) {
    os.write(kMagic.data(), 4);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) {
        put_u32(os, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) {
        put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    if (!os) {
        throw Error("HPX1: write failed");
    }
}

Tensor read_hpx1(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic) {
        throw Error("HPX1: bad magic");
    }
    const std::uint32_t rank = get_u32(is);
    if (rank == 0 || rank > 16) {
        throw Error("HPX1: unsupported rank " + std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& d : shape) {
        d = get_u32(is);
    }
    Tensor t(shape);
    for (auto& v : t.data()) {
        v = static_cast<double>(std::bit_cast<float>(get_u32(is)));
    }
    return t;
}

void save_hpx1(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    write_hpx1(os, t);
}

Tensor load_hpx1(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    return read_hpx1(is);
}

void save_pgm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 2) {
        throw Error("save_pgm: expected [H, W] tensor, got " + shape_str(image.shape()));
    }
    const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
    const double range = *hi - *lo;
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    os << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
    for (double v : image.data()) {
        const double s = range > 0.0 ? (v - *lo) / range : 0.0;
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0))));
    }
}

Tensor load_pnm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    const std::string magic = read_token(is);
    if (magic != "P5" && magic != "P6") {
        throw Error(path.string() + ": only binary PGM/PPM supported");
    }
    const std::size_t w = std::stoul(read_token(is));
    const std::size_t h = std::stoul(read_token(is));
    const double maxval = std::stod(read_token(is));
    if (maxval <= 0 || maxval > 255) {
        throw Error(path.string() + ": only 8-bit images supported");
    }
    const std::size_t ch = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> raw(w * h * ch);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw Error(path.string() + ": truncated pixel data");
    }
    Tensor img({h, w, 3});
    for (std::size_t p = 0; p < w * h; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            img[p * 3 + c] = raw[p * ch + (ch == 3 ? c : 0)] / maxval;
        }
    }
    return img;
}

}  // namespace hpx
