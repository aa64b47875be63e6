#include "tnshield/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace tnshield {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void WeightGrads::add_scaled(const WeightGrads& other, double scale) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i)
            weights[l][i] += scale * other.weights[l][i];
        for (std::size_t i = 0; i < biases[l].size(); ++i)
            biases[l][i] += scale * other.biases[l][i];
    }
}

WeightGrads zero_grads(const Model& model) {
    WeightGrads g;
    g.weights.resize(model.layer_count());
    g.biases.resize(model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        g.weights[l].assign(model.weights[l].size(), 0.0);
        g.biases[l].assign(model.biases[l].size(), 0.0);
    }
    return g;
}

Model init_model(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw BadArchitectureError("need at least input and output layers");
    for (int s : layer_sizes)
        if (s < 1) throw BadArchitectureError("layer sizes must be >= 1");

    Model m;
    m.layer_sizes = layer_sizes;
    m.activation = activation;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (auto& v : w) v = dist(rng);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(fan_out, 0.0);
    }
    return m;
}

ForwardTrace forward(const Model& model, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != model.input_dim())
        throw DimensionMismatchError("input has length " + std::to_string(x.size()) +
                                     ", expected " + std::to_string(model.input_dim()));
    ForwardTrace t;
    t.input = x;
    const std::vector<double>* in = &t.input;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const int rows = model.layer_sizes[l + 1];
        const int cols = model.layer_sizes[l];
        std::vector<double> z(rows);
        const double* w = model.weights[l].data();
        for (int r = 0; r < rows; ++r) {
            double acc = model.biases[l][r];
            const double* wr = w + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) acc += wr[c] * (*in)[c];
            z[r] = acc;
        }
        t.pre.push_back(std::move(z));
        if (l + 1 < model.layer_count()) {
            std::vector<double> a(rows);
            for (int r = 0; r < rows; ++r) {
                const double v = t.pre.back()[r];
                a[r] = model.activation == Activation::ReLU ? (v > 0.0 ? v : 0.0) : std::tanh(v);
            }
            t.act.push_back(std::move(a));
            in = &t.act.back();
        }
    }
    t.outputs.resize(model.output_dim());
    for (int i = 0; i < model.output_dim(); ++i) t.outputs[i] = sigmoid(t.pre.back()[i]);
    return t;
}

namespace {

void check_trace(const Model& model, const ForwardTrace& trace,
                 const std::vector<double>& upstream) {
    if (trace.pre.size() != model.layer_count() ||
        static_cast<int>(trace.input.size()) != model.input_dim())
        throw TraceMismatchError("forward trace does not match model architecture");
    for (std::size_t l = 0; l < model.layer_count(); ++l)
        if (static_cast<int>(trace.pre[l].size()) != model.layer_sizes[l + 1])
            throw TraceMismatchError("forward trace does not match model architecture");
    if (static_cast<int>(upstream.size()) != model.output_dim())
        throw TraceMismatchError("upstream gradient has wrong length");
}

double act_derivative(Activation a, double pre) {
    if (a == Activation::ReLU) return pre > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(pre);
    return 1.0 - t * t;
}

// Backward pass from logits down to (and including) the given layer; returns
// the per-layer deltas d<upstream, logits>/d pre-activation.
std::vector<std::vector<double>> backward_deltas(const Model& model, const ForwardTrace& trace,
                                                 const std::vector<double>& upstream) {
    const std::size_t L = model.layer_count();
    std::vector<std::vector<double>> delta(L);
    delta[L - 1] = upstream;
    for (std::size_t l = L - 1; l-- > 0;) {
        const int rows = model.layer_sizes[l + 2];  // rows of layer l+1
        const int cols = model.layer_sizes[l + 1];
        std::vector<double> d(cols, 0.0);
        const double* w = model.weights[l + 1].data();
        for (int r = 0; r < rows; ++r) {
            const double dr = delta[l + 1][r];
            if (dr == 0.0) continue;
            const double* wr = w + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) d[c] += wr[c] * dr;
        }
        for (int c = 0; c < cols; ++c) d[c] *= act_derivative(model.activation, trace.pre[l][c]);
        delta[l] = std::move(d);
    }
    return delta;
}

}  // namespace

WeightGrads grad_weights(const Model& model, const ForwardTrace& trace,
                         const std::vector<double>& upstream) {
    check_trace(model, trace, upstream);
    auto delta = backward_deltas(model, trace, upstream);
    WeightGrads g = zero_grads(model);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const std::vector<double>& in = l == 0 ? trace.input : trace.act[l - 1];
        const int rows = model.layer_sizes[l + 1];
        const int cols = model.layer_sizes[l];
        for (int r = 0; r < rows; ++r) {
            const double dr = delta[l][r];
            g.biases[l][r] = dr;
            if (dr == 0.0) continue;
            double* gr = g.weights[l].data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gr[c] = dr * in[c];
        }
    }
    return g;
}

std::vector<double> grad_input(const Model& model, const ForwardTrace& trace,
                               const std::vector<double>& upstream) {
    check_trace(model, trace, upstream);
    auto delta = backward_deltas(model, trace, upstream);
    const int rows = model.layer_sizes[1];
    const int cols = model.layer_sizes[0];
    std::vector<double> g(cols, 0.0);
    const double* w = model.weights[0].data();
    for (int r = 0; r < rows; ++r) {
        const double dr = delta[0][r];
        if (dr == 0.0) continue;
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) g[c] += wr[c] * dr;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Model file format
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kModelVersion = "tnorm-shield-model-v1";

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

std::string model_to_string(const Model& model) {
    std::ostringstream out;
    out << kModelVersion << "\n";
    out << "layers";
    for (int s : model.layer_sizes) out << " " << s;
    out << "\n";
    out << "activation " << (model.activation == Activation::ReLU ? "relu" : "tanh") << "\n";
    out << "seed " << model.seed << "\n";
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const int rows = model.layer_sizes[l + 1];
        const int cols = model.layer_sizes[l];
        out << "W" << l << " " << rows << " " << cols << "\n";
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c)
                out << (c ? " " : "") << fmt_double(model.weights[l][static_cast<std::size_t>(r) * cols + c]);
            out << "\n";
        }
        out << "b" << l << " " << rows << "\n";
        for (int r = 0; r < rows; ++r) out << (r ? " " : "") << fmt_double(model.biases[l][r]);
        out << "\n";
    }
    return out.str();
}

Model model_from_string(const std::string& text) {
    std::istringstream in(text);
    std::string version;
    if (!std::getline(in, version) || version != kModelVersion)
        throw IoError("unsupported model file version '" + version + "'");

    Model m;
    std::string key;
    in >> key;
    if (key != "layers") throw IoError("expected 'layers' header");
    {
        std::string rest;
        std::getline(in, rest);
        std::istringstream ls(rest);
        int s;
        while (ls >> s) m.layer_sizes.push_back(s);
    }
    if (m.layer_sizes.size() < 2) throw IoError("model needs at least two layers");
    std::string act;
    in >> key >> act;
    if (key != "activation" || (act != "relu" && act != "tanh"))
        throw IoError("bad activation line");
    m.activation = act == "relu" ? Activation::ReLU : Activation::Tanh;
    in >> key >> m.seed;
    if (key != "seed") throw IoError("bad seed line");

    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        int rows = 0, cols = 0;
        in >> key >> rows >> cols;
        if (key != "W" + std::to_string(l) || rows != m.layer_sizes[l + 1] ||
            cols != m.layer_sizes[l])
            throw IoError("bad weight header for layer " + std::to_string(l));
        std::vector<double> w(static_cast<std::size_t>(rows) * cols);
        for (auto& v : w)
            if (!(in >> v)) throw IoError("truncated weight matrix");
        m.weights.push_back(std::move(w));
        int n = 0;
        in >> key >> n;
        if (key != "b" + std::to_string(l) || n != rows)
            throw IoError("bad bias header for layer " + std::to_string(l));
        std::vector<double> b(n);
        for (auto& v : b)
            if (!(in >> v)) throw IoError("truncated bias vector");
        m.biases.push_back(std::move(b));
    }
    return m;
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file " + path);
    out << model_to_string(model);
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_string(buf.str());
}

}  // namespace tnshield
