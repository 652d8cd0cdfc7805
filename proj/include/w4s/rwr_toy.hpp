#pragma once

#include "w4s/collector.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace w4s {

// A softmax policy over a fixed library of action templates, with one row of
// logits per context bucket.
struct ToyPolicy {
    std::size_t buckets = 1;
    std::size_t templates = 1;
    std::vector<double> theta;  // row-major [bucket][template]

    ToyPolicy() = default;
    ToyPolicy(std::size_t b, std::size_t t) : buckets(b), templates(t), theta(b * t, 0.0) {}

    double& logit(std::size_t b, std::size_t t) { return theta[b * templates + t]; }
    double logit(std::size_t b, std::size_t t) const { return theta[b * templates + t]; }

    std::vector<double> log_probs(std::size_t b) const {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < templates; ++t) mx = std::max(mx, logit(b, t));
        double z = 0.0;
        for (std::size_t t = 0; t < templates; ++t) z += std::exp(logit(b, t) - mx);
        const double log_z = mx + std::log(z);
        std::vector<double> out(templates);
        for (std::size_t t = 0; t < templates; ++t) out[t] = logit(b, t) - log_z;
        return out;
    }

    std::vector<double> probs(std::size_t b) const {
        auto lp = log_probs(b);
        for (auto& v : lp) v = std::exp(v);
        return lp;
    }
};

struct ToyExample {
    std::size_t bucket = 0;
    std::size_t templ = 0;
    double weight = 1.0;
};

using ToyBatch = std::vector<ToyExample>;

inline std::size_t context_bucket(std::string_view context, std::size_t buckets) {
    return static_cast<std::size_t>(fnv1a64(context) % buckets);
}

// Templates are the distinct targets in first-seen order; each record maps
// to the template equal to its target.
struct ToyData {
    std::vector<std::string> library;
    ToyBatch batch;
};

inline ToyData toy_data_from_records(const std::vector<RwrRecord>& records, std::size_t buckets) {
    ToyData d;
    std::map<std::string, std::size_t> index;
    for (const auto& r : records) {
        auto [it, inserted] = index.try_emplace(r.target, d.library.size());
        if (inserted) d.library.push_back(r.target);
        if (!(r.weight > 0.0)) throw Error(ErrorKind::InvalidValue, "record weight must be > 0");
        d.batch.push_back({context_bucket(r.context, buckets), it->second, r.weight});
    }
    return d;
}

// -(1/N) * sum_i w_i * log pi(t_i | b_i)
inline double rwr_loss(const ToyPolicy& policy, const ToyBatch& batch) {
    if (batch.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
    double sum = 0.0;
    for (const auto& ex : batch) sum += ex.weight * policy.log_probs(ex.bucket)[ex.templ];
    return -sum / static_cast<double>(batch.size());
}

// Analytic gradient of rwr_loss: each record adds -(w/N)(1[j=t] - p_j) to
// its bucket's row. With mean=false the 1/N factor is dropped. An empty
// batch yields the zero vector.
inline std::vector<double> rwr_grad(const ToyPolicy& policy, const ToyBatch& batch, bool mean = true) {
    std::vector<double> g(policy.theta.size(), 0.0);
    if (batch.empty()) return g;
    const double scale = mean ? 1.0 / static_cast<double>(batch.size()) : 1.0;
    for (const auto& ex : batch) {
        const auto p = policy.probs(ex.bucket);
        for (std::size_t j = 0; j < policy.templates; ++j) {
            const double indicator = j == ex.templ ? 1.0 : 0.0;
            g[ex.bucket * policy.templates + j] -= scale * ex.weight * (indicator - p[j]);
        }
    }
    return g;
}

struct TrainResult {
    ToyPolicy policy;
    std::vector<double> losses;  // loss before each epoch's update, then the final loss
};

// Plain full-batch gradient descent.
inline TrainResult train_toy(ToyPolicy policy, const ToyBatch& batch, double lr, int epochs) {
    TrainResult r;
    for (int e = 0; e < epochs; ++e) {
        const double loss = rwr_loss(policy, batch);
        if (!std::isfinite(loss)) throw Error(ErrorKind::DivergedLoss, "loss became non-finite at epoch " + std::to_string(e));
        r.losses.push_back(loss);
        const auto g = rwr_grad(policy, batch);
        for (std::size_t i = 0; i < g.size(); ++i) policy.theta[i] -= lr * g[i];
    }
    const double final_loss = rwr_loss(policy, batch);
    if (!std::isfinite(final_loss)) throw Error(ErrorKind::DivergedLoss, "final loss is non-finite");
    r.losses.push_back(final_loss);
    for (double t : policy.theta) {
        if (!std::isfinite(t)) throw Error(ErrorKind::DivergedLoss, "parameters became non-finite");
    }
    r.policy = std::move(policy);
    return r;
}

inline std::string loss_curve_csv(const std::vector<double>& losses) {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < losses.size(); ++e) out += std::to_string(e) + "," + shortest_double(losses[e]) + "\n";
    return out;
}

}  // namespace w4s
