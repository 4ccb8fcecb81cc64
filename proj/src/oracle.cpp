#include "vlmgeo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vlmgeo/error.hpp"
#include "vlmgeo/rng.hpp"

namespace vlmgeo {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Modified Gram-Schmidt, run twice for numerical orthogonality.
std::vector<std::vector<double>> orthonormalize(std::vector<std::vector<double>> vs) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < i; ++j) {
                const double p = dot(vs[i], vs[j]);
                for (std::size_t k = 0; k < vs[i].size(); ++k) vs[i][k] -= p * vs[j][k];
            }
        }
        const double n = norm(vs[i]);
        if (n < 1e-8) throw Error(Errc::degenerate, "feature draw collapsed during orthogonalization");
        for (auto& x : vs[i]) x /= n;
    }
    return vs;
}

std::vector<double> mix(double own, std::span<const double> e, double shared, std::span<const double> p1,
                        std::span<const double> p2, double angle_deg) {
    std::vector<double> out(e.size());
    const double c = std::cos(angle_deg * kDeg), s = std::sin(angle_deg * kDeg);
    for (std::size_t k = 0; k < e.size(); ++k) out[k] = own * e[k] + shared * (c * p1[k] + s * p2[k]);
    return out;
}

void check_spec(const WorldSpec& s) {
    // 6 colors, 6 shapes, hue plane, shape-coupling plane, mean direction.
    if (s.d < 17) throw Error(Errc::invalid_argument, "oracle world needs d >= 17");
    if (!(s.feature_gain > 0.0)) throw Error(Errc::invalid_argument, "feature_gain must be positive");
    if (!(s.noise_sigma >= 0.0)) throw Error(Errc::invalid_argument, "noise_sigma must be >= 0");
    if (!(s.answer_temperature > 0.0)) throw Error(Errc::invalid_argument, "answer_temperature must be positive");
    if (!(s.mu_scale >= 0.0)) throw Error(Errc::invalid_argument, "mu_scale must be >= 0");
    for (double g : {s.color_coupling, s.shape_coupling}) {
        if (!(g >= 0.0 && g < 1.0)) throw Error(Errc::invalid_argument, "coupling must lie in [0, 1)");
    }
    if (!(s.decode_noise_floor >= 0.0) || !(s.decode_noise_gain >= 0.0)) {
        throw Error(Errc::invalid_argument, "decode noise parameters must be >= 0");
    }
}

std::uint64_t sequence_key(const ActivationSequence& acts) {
    return fnv1a64(acts.stimulus_id) ^ mix64(fnv1a64(acts.intervention));
}

}  // namespace

json to_json(const WorldSpec& s) {
    return {{"d", s.d},
            {"feature_gain", s.feature_gain},
            {"noise_sigma", s.noise_sigma},
            {"answer_temperature", s.answer_temperature},
            {"mu_scale", s.mu_scale},
            {"seed", s.seed},
            {"model_id", s.model_id},
            {"color_coupling", s.color_coupling},
            {"shape_coupling", s.shape_coupling},
            {"color_angles", s.color_angles},
            {"decode_noise_floor", s.decode_noise_floor},
            {"decode_noise_gain", s.decode_noise_gain},
            {"match_cos", s.match_cos}};
}

WorldSpec world_spec_from_json(const json& j) {
    WorldSpec s;
    try {
        s.d = j.value("d", s.d);
        s.feature_gain = j.value("feature_gain", s.feature_gain);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.answer_temperature = j.value("answer_temperature", s.answer_temperature);
        s.mu_scale = j.value("mu_scale", s.mu_scale);
        s.seed = j.value("seed", s.seed);
        s.model_id = j.value("model_id", s.model_id);
        s.color_coupling = j.value("color_coupling", s.color_coupling);
        s.shape_coupling = j.value("shape_coupling", s.shape_coupling);
        s.color_angles = j.value("color_angles", s.color_angles);
        s.decode_noise_floor = j.value("decode_noise_floor", s.decode_noise_floor);
        s.decode_noise_gain = j.value("decode_noise_gain", s.decode_noise_gain);
        s.match_cos = j.value("match_cos", s.match_cos);
    } catch (const json::exception& e) {
        throw Error(Errc::bad_header, std::string("oracle world spec: ") + e.what());
    }
    check_spec(s);
    return s;
}

OracleWorld::OracleWorld(WorldSpec spec) : spec_(std::move(spec)) {
    check_spec(spec_);
    const std::size_t d = spec_.d;
    Rng rng(derive_seed(spec_.seed, fnv1a64("oracle-world")));
    std::vector<std::vector<double>> draws(17, std::vector<double>(d));
    for (auto& v : draws) {
        for (auto& x : v) x = rng.normal();
    }
    const auto basis = orthonormalize(std::move(draws));
    // basis: 0-5 shapes, 6-11 colors, 12-13 hue plane, 14-15 shape plane, 16 mean
    hue_plane_ = {basis[12], basis[13]};
    const double gc = spec_.color_coupling, gs = spec_.shape_coupling;
    for (std::size_t i = 0; i < 6; ++i) {
        colors_[i] = mix(std::sqrt(1.0 - gc), basis[6 + i], std::sqrt(gc), basis[12], basis[13], spec_.color_angles[i]);
        shapes_[i] = mix(std::sqrt(1.0 - gs), basis[i], std::sqrt(gs), basis[14], basis[15], 60.0 * static_cast<double>(i));
    }
    mu_.resize(d);
    for (std::size_t k = 0; k < d; ++k) mu_[k] = spec_.mu_scale * basis[16][k];
}

double OracleWorld::threshold() const { return spec_.feature_gain * std::numbers::sqrt2 * 0.5; }

std::vector<double> OracleWorld::hue_vector(double degrees) const {
    std::vector<double> v(spec_.d);
    const double c = std::cos(degrees * kDeg), s = std::sin(degrees * kDeg);
    for (std::size_t k = 0; k < spec_.d; ++k) v[k] = c * hue_plane_[0][k] + s * hue_plane_[1][k];
    return v;
}

std::vector<double> OracleWorld::color_term(const ObjectColor& c) const {
    if (const auto* named = std::get_if<Color>(&c)) return colors_[static_cast<std::size_t>(*named)];
    return hue_vector(std::get<Hue>(c).degrees);
}

std::vector<double> OracleWorld::composite(Color c, Shape s) const {
    std::vector<double> v(spec_.d);
    const auto& k = colors_[static_cast<std::size_t>(c)];
    const auto& sh = shapes_[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < spec_.d; ++i) v[i] = k[i] + sh[i];
    const double n = norm(v);
    for (auto& x : v) x /= n;
    return v;
}

std::size_t argmax_index(const std::vector<std::pair<std::string, double>>& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i].second > logits[best].second) best = i;
    }
    return best;
}

ActivationSequence oracle_embed(const SceneSpec& scene, const OracleWorld& world) {
    const TokenGrid grid = kOracleGrid;
    if (scene.width % static_cast<int>(grid.cols) != 0 || scene.height % static_cast<int>(grid.rows) != 0) {
        throw Error(Errc::invalid_argument, "scene canvas does not tile into a 16x16 token grid");
    }
    const std::size_t L = static_cast<std::size_t>(grid.rows) * grid.cols;
    const std::size_t d = world.dim();
    const double a = world.gain();

    // Each cell is owned by the object with the largest coverage among those
    // that claim it; an object too small to reach the coverage threshold
    // claims its best cell.
    std::vector<int> owner(L, -1);
    std::vector<double> owner_cov(L, 0.0);
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto cov = cell_coverage(scene, i, grid);
        std::vector<std::size_t> claimed;
        for (std::size_t t = 0; t < L; ++t) {
            if (cov[t] >= kDefaultCoverage) claimed.push_back(t);
        }
        if (claimed.empty()) {
            const auto best = static_cast<std::size_t>(std::max_element(cov.begin(), cov.end()) - cov.begin());
            if (cov[best] > 0.0) claimed.push_back(best);
        }
        for (std::size_t t : claimed) {
            if (owner[t] < 0 || cov[t] > owner_cov[t]) {
                owner[t] = static_cast<int>(i);
                owner_cov[t] = cov[t];
            }
        }
    }

    std::vector<std::vector<double>> signal(scene.objects.size());
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& o = scene.objects[i];
        auto v = world.color_term(o.color);
        const auto s = world.shape_dir(o.shape);
        for (std::size_t k = 0; k < d; ++k) v[k] = a * (v[k] + s[k]);
        signal[i] = std::move(v);
    }

    ActivationSequence seq;
    seq.length = L;
    seq.dim = d;
    seq.tokens.resize(L * d);
    seq.stimulus_id = scene.id;
    seq.model_id = world.spec().model_id;
    seq.layer_tag = "oracle";
    seq.grid = grid;
    const auto mu = world.mu_glob();
    const double sigma = world.spec().noise_sigma;
    const std::uint64_t scene_key = derive_seed(world.spec().seed, scene.seed);
    std::vector<double> h(d);
    for (std::size_t t = 0; t < L; ++t) {
        std::copy(mu.begin(), mu.end(), h.begin());
        if (owner[t] >= 0) {
            const auto& v = signal[static_cast<std::size_t>(owner[t])];
            for (std::size_t k = 0; k < d; ++k) h[k] += v[k];
        }
        if (sigma > 0.0) {
            Rng rng(derive_seed(scene_key, t));
            for (std::size_t k = 0; k < d; ++k) h[k] += sigma * rng.normal();
        }
        auto row = seq.row(t);
        for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(h[k]);
    }
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        TokenAnnotation ann;
        ann.label = object_label(scene.objects[i]);
        for (std::size_t t = 0; t < L; ++t) {
            if (owner[t] == static_cast<int>(i)) ann.tokens.push_back(static_cast<std::uint32_t>(t));
        }
        seq.annotations.push_back(std::move(ann));
    }
    return seq;
}

OracleAnswer oracle_answer_presence(const ActivationSequence& acts, Color color, Shape shape,
                                    const OracleWorld& world) {
    if (acts.dim != world.dim()) throw Error(Errc::dimension_mismatch, "activation width differs from world d");
    const auto q = world.composite(color, shape);
    const auto mu = world.mu_glob();
    const auto& spec = world.spec();
    const double a = world.gain();
    double score = 0.0;
    double interference = 0.0;
    std::vector<double> dev(acts.dim);
    for (std::size_t t = 0; t < acts.length; ++t) {
        const auto row = acts.row(t);
        for (std::size_t k = 0; k < acts.dim; ++k) dev[k] = static_cast<double>(row[k]) - mu[k];
        const double p = dot(dev, q);
        if (t == 0 || p > score) score = p;
        const double n = norm(dev);
        if (n > 0.5 * a) {
            const double c = p / n;
            if (c < spec.match_cos) interference = std::max(interference, c);
        }
    }
    if (acts.length == 0) score = 0.0;
    const double noise_std = a * (spec.decode_noise_floor + spec.decode_noise_gain * interference);
    double eta = 0.0;
    if (noise_std > 0.0) {
        Rng rng(derive_seed(derive_seed(spec.seed, sequence_key(acts)), fnv1a64(concept_label(color, shape))));
        eta = noise_std * rng.normal();
    }
    const double T = spec.answer_temperature;
    OracleAnswer ans;
    ans.logits = {{"yes", (score + eta) / T}, {"no", world.threshold() / T}};
    ans.choice = ans.logits[argmax_index(ans.logits)].first;
    return ans;
}

OracleAnswer oracle_answer_color(const ActivationSequence& acts, const OracleWorld& world) {
    if (acts.dim != world.dim()) throw Error(Errc::dimension_mismatch, "activation width differs from world d");
    const auto mu = world.mu_glob();
    std::array<double, 6> best{};
    best.fill(acts.length ? -INFINITY : 0.0);
    std::vector<double> dev(acts.dim);
    for (std::size_t t = 0; t < acts.length; ++t) {
        const auto row = acts.row(t);
        for (std::size_t k = 0; k < acts.dim; ++k) dev[k] = static_cast<double>(row[k]) - mu[k];
        for (std::size_t c = 0; c < 6; ++c) best[c] = std::max(best[c], dot(dev, world.color_dir(kAllColors[c])));
    }
    OracleAnswer ans;
    for (std::size_t c = 0; c < 6; ++c) {
        ans.logits.emplace_back(std::string(to_string(kAllColors[c])), best[c] / world.spec().answer_temperature);
    }
    ans.choice = ans.logits[argmax_index(ans.logits)].first;
    return ans;
}

OracleAnswer oracle_answer_similarity(const SimilarityTrial& trial, const OracleWorld& world) {
    if (trial.letters.size() != trial.setup_hues.size() || trial.letters.empty()) {
        throw Error(Errc::invalid_argument, "similarity trial needs one letter per setup hue");
    }
    OracleAnswer ans;
    for (std::size_t i = 0; i < trial.setup_hues.size(); ++i) {
        const double delta = circular_distance(trial.setup_hues[i], trial.query_hue);
        ans.logits.emplace_back(trial.letters[i], std::cos(delta * kDeg) / world.spec().answer_temperature);
    }
    ans.choice = ans.logits[argmax_index(ans.logits)].first;
    return ans;
}

}  // namespace vlmgeo
