#include "mgrl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mgrl/errors.hpp"

namespace mgrl {

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'G', 'R', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::vector<unsigned char>& buf, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>)
        bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
    else
        bits = static_cast<std::uint64_t>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& buf, const std::string& name) : buf_(buf), name_(name) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > buf_.size())
            throw CheckpointError(CheckpointError::Kind::SizeMismatch, name_ + ": truncated checkpoint");
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        if constexpr (std::is_floating_point_v<T>)
            return std::bit_cast<double>(bits);
        else
            return static_cast<T>(bits);
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::vector<unsigned char>& buf_;
    std::string name_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Mlp<double>& net, std::uint64_t step) {
    std::vector<unsigned char> buf(kMagic.begin(), kMagic.end());
    put_le<std::uint32_t>(buf, kCheckpointVersion);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(net.layer_sizes().size()));
    for (auto s : net.layer_sizes()) put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(s));
    put_le<std::uint64_t>(buf, net.seed());
    put_le<std::uint64_t>(buf, step);
    const auto& p = net.params();
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) put_le<double>(buf, p.weights[l].data()[i]);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) put_le<double>(buf, p.biases[l][i]);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path.string());
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto name = path.string();

    if (buf.size() < kMagic.size() || std::memcmp(buf.data(), kMagic.data(), kMagic.size()) != 0)
        throw CheckpointError(CheckpointError::Kind::BadMagic, name + ": not a checkpoint file");
    const std::vector<unsigned char> body(buf.begin() + kMagic.size(), buf.end());
    Reader r(body, name);

    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::Version,
                              name + ": unsupported checkpoint version " + std::to_string(version));
    const auto n_layers = r.get<std::uint32_t>();
    if (n_layers < 2 || n_layers > 64)
        throw CheckpointError(CheckpointError::Kind::SizeMismatch, name + ": implausible layer count");
    std::vector<Eigen::Index> sizes;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const auto s = r.get<std::uint64_t>();
        if (s == 0 || s > (1u << 20))
            throw CheckpointError(CheckpointError::Kind::SizeMismatch, name + ": implausible layer size");
        sizes.push_back(static_cast<Eigen::Index>(s));
    }
    const auto seed = r.get<std::uint64_t>();
    const auto step = r.get<std::uint64_t>();

    Mlp<double> net(sizes, seed);
    auto& p = net.params();
    if (r.remaining() != static_cast<std::size_t>(p.count()) * sizeof(double))
        throw CheckpointError(CheckpointError::Kind::SizeMismatch,
                              name + ": expected " + std::to_string(p.count()) + " parameters, found " +
                                  std::to_string(r.remaining() / sizeof(double)) + " bytes/8");
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) p.weights[l].data()[i] = r.get<double>();
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l][i] = r.get<double>();
    }
    return {std::move(net), step};
}

} // namespace mgrl
