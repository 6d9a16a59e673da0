#include "acpp/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "acpp/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace acpp {

void validate(const ModelConfig& cfg) {
    if (cfg.num_blocks < 1) throw ConfigError("num_blocks must be at least 1");
    if (cfg.feature_channels < 1) throw ConfigError("feature_channels must be at least 1");
    if (cfg.ca_reduction < 1) throw ConfigError("ca_reduction must be at least 1");
    if (cfg.feature_channels % cfg.ca_reduction != 0)
        throw ConfigError("ca_reduction must divide feature_channels");
    if (cfg.sa_kernel < 1 || cfg.sa_kernel % 2 == 0)
        throw ConfigError("sa_kernel must be odd and positive");
}

namespace {

std::string block_name(int i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "block%02d.%s", i, suffix);
    return buf;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
    validate(cfg);
    const int f = cfg.feature_channels;
    const int fr = f / cfg.ca_reduction;
    const int sk = cfg.sa_kernel;
    std::vector<std::pair<std::string, Shape>> layout;
    layout.emplace_back("head.weight", Shape{f, 3, 3, 3});
    layout.emplace_back("head.bias", Shape{f});
    for (int i = 0; i < cfg.num_blocks; ++i) {
        layout.emplace_back(block_name(i, "conv1.weight"), Shape{f, f, 3, 3});
        layout.emplace_back(block_name(i, "conv1.bias"), Shape{f});
        layout.emplace_back(block_name(i, "conv2.weight"), Shape{f, f, 3, 3});
        layout.emplace_back(block_name(i, "conv2.bias"), Shape{f});
        layout.emplace_back(block_name(i, "ca.reduce.weight"), Shape{fr, f, 1, 1});
        layout.emplace_back(block_name(i, "ca.reduce.bias"), Shape{fr});
        layout.emplace_back(block_name(i, "ca.expand.weight"), Shape{f, fr, 1, 1});
        layout.emplace_back(block_name(i, "ca.expand.bias"), Shape{f});
        layout.emplace_back(block_name(i, "sa.weight"), Shape{1, 2, sk, sk});
        layout.emplace_back(block_name(i, "sa.bias"), Shape{1});
    }
    layout.emplace_back("tail.weight", Shape{3, f, 3, 3});
    layout.emplace_back("tail.bias", Shape{3});
    return layout;
}

int64_t parameter_count(const ModelConfig& cfg) {
    int64_t n = 0;
    for (const auto& [name, shape] : parameter_layout(cfg)) n += shape_numel(shape);
    return n;
}

template <typename S>
Tensor<S>& ModelParams<S>::find(const std::string& name) {
    for (auto& [n, t] : tensors)
        if (n == name) return t;
    throw Error("no parameter named " + name);
}

template <typename S>
void ModelParams<S>::set_requires_grad(bool on) {
    for (auto& [n, t] : tensors) t.requires_grad = on;
}

template <typename S>
ModelParams<S> init_model(const ModelConfig& cfg, uint64_t seed) {
    ModelParams<S> mp;
    mp.config = cfg;
    mp.seed = seed;
    Rng rng(derive_seed(seed, "init"));
    for (const auto& [name, shape] : parameter_layout(cfg)) {
        Tensor<S> t(shape, S(0));
        const bool is_weight = shape.size() == 4;
        if (is_weight) {
            // fan-in = in_channels * kernel area
            const double fan_in = double(shape[1]) * shape[2] * shape[3];
            const double bound = 1.0 / std::sqrt(fan_in);
            for (S& v : t.data) v = S(rng.uniform(-bound, bound));
        }
        mp.tensors.emplace_back(name, std::move(t));
    }
    return mp;
}

namespace {

template <typename S>
using VarMap = std::unordered_map<std::string, typename Graph<S>::Var>;

template <typename S>
typename Graph<S>::Var conv_same(Graph<S>& g, typename Graph<S>::Var x, const VarMap<S>& vars,
                                 const std::string& prefix, int kernel) {
    return g.conv2d(x, vars.at(prefix + ".weight"), vars.at(prefix + ".bias"), 1, PadMode::zero,
                    (kernel - 1) / 2);
}

template <typename S>
typename Graph<S>::Var channel_attention(Graph<S>& g, typename Graph<S>::Var x,
                                         const VarMap<S>& vars, const std::string& prefix) {
    auto s = g.global_avg_pool(x);
    s = g.relu(conv_same(g, s, vars, prefix + ".reduce", 1));
    s = g.sigmoid(conv_same(g, s, vars, prefix + ".expand", 1));
    return g.mul(x, s);  // gate broadcasts over H,W
}

template <typename S>
typename Graph<S>::Var spatial_attention(Graph<S>& g, typename Graph<S>::Var x,
                                         const VarMap<S>& vars, const std::string& prefix,
                                         int kernel) {
    auto stats = g.concat_channels(g.channel_reduce(x, ReduceKind::mean),
                                   g.channel_reduce(x, ReduceKind::max));
    auto gate = g.sigmoid(conv_same(g, stats, vars, prefix, kernel));
    return g.mul(x, gate);  // gate broadcasts over channels
}

}  // namespace

template <typename S>
typename Graph<S>::Var model_forward(Graph<S>& g, ModelParams<S>& params,
                                     typename Graph<S>::Var input) {
    const ModelConfig& cfg = params.config;
    validate(cfg);
    const Shape in_shape = g.value(input).shape;  // copy: leaf() below may reallocate nodes
    if (in_shape.size() != 4 || in_shape[1] != 3)
        throw ShapeError("model input must be (N,3,H,W), got " + shape_str(in_shape));
    if (in_shape[2] < cfg.sa_kernel || in_shape[3] < cfg.sa_kernel)
        throw ShapeError("model input " + shape_str(in_shape) + " smaller than sa_kernel " +
                         std::to_string(cfg.sa_kernel));

    VarMap<S> vars;
    vars.reserve(params.tensors.size());
    for (auto& [name, t] : params.tensors) vars.emplace(name, g.leaf(t));

    auto feat = conv_same(g, input, vars, "head", 3);
    for (int i = 0; i < cfg.num_blocks; ++i) {
        const std::string base = block_name(i, "");
        auto t = g.relu(conv_same(g, feat, vars, base + "conv1", 3));
        t = conv_same(g, t, vars, base + "conv2", 3);
        t = channel_attention(g, t, vars, base + "ca");
        t = spatial_attention(g, t, vars, base + "sa", cfg.sa_kernel);
        feat = g.add(feat, t);
    }
    auto out = conv_same(g, feat, vars, "tail", 3);
    if (cfg.global_skip) out = g.add(out, input);
    return out;
}

ImageBuffer run_model(ModelParams<float>& params, const ImageBuffer& input) {
    GraphF g;
    Tensor<float> x = image_to_tensor(input);
    const auto out = model_forward(g, params, g.constant(std::move(x)));
    return tensor_to_image(g.value(out), /*clamp=*/true);
}

ImageBuffer self_ensemble_infer(ModelParams<float>& params, const ImageBuffer& input) {
    const Tensor<float> x = image_to_tensor(input);
    std::vector<Tensor<float>> outs;
    outs.reserve(4);
    for (int k = 0; k < 4; ++k) {
        GraphF g;
        const auto out = model_forward(g, params, g.constant(rot90_nchw(x, k)));
        outs.push_back(rot90_nchw(g.value(out), 4 - k));
    }
    Tensor<float> avg(x.shape, 0.f);
    for (int64_t i = 0; i < avg.numel(); ++i) {
        const size_t t = size_t(i);
        avg.data[t] = ((outs[0].data[t] + outs[1].data[t]) +
                       (outs[2].data[t] + outs[3].data[t])) * 0.25f;
    }
    return tensor_to_image(avg, /*clamp=*/true);
}

namespace {

constexpr char kMagic[4] = {'A', 'C', 'P', 'P'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const std::string& path) {
    nlohmann::json header;
    header["config"] = {{"num_blocks", params.config.num_blocks},
                        {"feature_channels", params.config.feature_channels},
                        {"ca_reduction", params.config.ca_reduction},
                        {"sa_kernel", params.config.sa_kernel},
                        {"global_skip", params.config.global_skip}};
    header["seed"] = params.seed;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : params.tensors)
        manifest.push_back({{"name", name}, {"shape", t.shape}});
    header["tensors"] = std::move(manifest);
    const std::string hbytes = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write(kMagic, 4);
    write_le(f, kVersion);
    write_le(f, uint32_t(hbytes.size()));
    f.write(hbytes.data(), std::streamsize(hbytes.size()));
    for (const auto& [name, t] : params.tensors)
        f.write(reinterpret_cast<const char*>(t.data.data()),
                std::streamsize(t.data.size() * sizeof(float)));
    f.flush();
    if (!f) throw IoError("short write saving checkpoint: " + path);
}

ModelParams<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    uint16_t version = 0;
    uint32_t hlen = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), sizeof version);
    f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a checkpoint (bad magic): " + path);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    std::string hbytes(hlen, '\0');
    f.read(hbytes.data(), std::streamsize(hlen));
    if (!f) throw IoError("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hbytes);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
    }

    ModelParams<float> mp;
    try {
        const auto& c = header.at("config");
        mp.config.num_blocks = c.at("num_blocks").get<int>();
        mp.config.feature_channels = c.at("feature_channels").get<int>();
        mp.config.ca_reduction = c.at("ca_reduction").get<int>();
        mp.config.sa_kernel = c.at("sa_kernel").get<int>();
        mp.config.global_skip = c.at("global_skip").get<bool>();
        mp.seed = header.at("seed").get<uint64_t>();

        const auto layout = parameter_layout(mp.config);
        const auto& manifest = header.at("tensors");
        if (manifest.size() != layout.size())
            throw IoError("checkpoint manifest does not match config: " + path);
        for (size_t i = 0; i < layout.size(); ++i) {
            const auto& entry = manifest.at(i);
            const Shape shape = entry.at("shape").get<Shape>();
            if (entry.at("name").get<std::string>() != layout[i].first || shape != layout[i].second)
                throw IoError("checkpoint manifest does not match config: " + path);
            mp.tensors.emplace_back(layout[i].first, Tensor<float>(shape, 0.f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
    }

    for (auto& [name, t] : mp.tensors) {
        f.read(reinterpret_cast<char*>(t.data.data()),
               std::streamsize(t.data.size() * sizeof(float)));
        if (!f) throw IoError("truncated checkpoint data at " + name + ": " + path);
    }
    f.peek();
    if (!f.eof()) throw IoError("trailing bytes after checkpoint data: " + path);
    return mp;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_model<float>(const ModelConfig&, uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, uint64_t);
template typename Graph<float>::Var model_forward<float>(Graph<float>&, ModelParams<float>&,
                                                         Graph<float>::Var);
template typename Graph<double>::Var model_forward<double>(Graph<double>&, ModelParams<double>&,
                                                           Graph<double>::Var);

}  // namespace acpp
