#include "smashvat/net.hpp"

#include <istream>
#include <ostream>

namespace smashvat {

namespace {

constexpr std::uint32_t kParamsMagic = 0x5456514E;  // "NQVT"
constexpr std::uint32_t kParamsVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("network checkpoint: truncated stream");
    return v;
}

void put_array(std::ostream& out, const float* data, std::int64_t rows, std::int64_t cols) {
    put(out, rows);
    put(out, cols);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(rows * cols * sizeof(float)));
}

void get_array(std::istream& in, float* data, std::int64_t rows, std::int64_t cols) {
    if (get<std::int64_t>(in) != rows || get<std::int64_t>(in) != cols)
        throw std::runtime_error("network checkpoint: shape mismatch");
    in.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(rows * cols * sizeof(float)));
    if (!in) throw std::runtime_error("network checkpoint: truncated stream");
}

}  // namespace

void save_params(std::ostream& out, const NetworkParams<float>& params, const LIFParams& lif) {
    put(out, kParamsMagic);
    put(out, kParamsVersion);
    put(out, static_cast<std::uint8_t>(params.mode));
    put(out, lif.tau);
    put(out, lif.v_rest);
    put(out, lif.v_threshold);
    put(out, static_cast<std::uint8_t>(lif.reset_mode));
    put(out, static_cast<std::int32_t>(lif.timesteps));
    put(out, lif.surrogate_width);
    params.for_each([&out](const auto& p) { put_array(out, p.data(), p.rows(), p.cols()); });
    if (!out) throw std::runtime_error("network checkpoint: write failure");
}

NetworkParams<float> load_params(std::istream& in, LIFParams& lif) {
    if (get<std::uint32_t>(in) != kParamsMagic)
        throw std::runtime_error("network checkpoint: bad magic");
    if (get<std::uint32_t>(in) != kParamsVersion)
        throw std::runtime_error("network checkpoint: unsupported version");
    auto mode = static_cast<NeuronMode>(get<std::uint8_t>(in));
    lif.tau = get<double>(in);
    lif.v_rest = get<double>(in);
    lif.v_threshold = get<double>(in);
    lif.reset_mode = static_cast<LIFParams::Reset>(get<std::uint8_t>(in));
    lif.timesteps = get<std::int32_t>(in);
    lif.surrogate_width = get<double>(in);
    NetworkParams<float> params = NetworkParams<float>::zeros(mode);
    params.for_each([&in](auto& p) { get_array(in, p.data(), p.rows(), p.cols()); });
    return params;
}

}  // namespace smashvat
