#include "dynde/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace dynde {

void PredictorConfig::validate() const {
    if (k < 1) throw std::invalid_argument("predictor.k must be >= 1");
    if (history < 1) throw std::invalid_argument("predictor.history must be >= 1");
    if (epochs < 1) throw std::invalid_argument("predictor.epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("predictor.batch_size must be >= 1");
    if (min_batch < 1) throw std::invalid_argument("predictor.min_batch must be >= 1");
    if (n_p < 1) throw std::invalid_argument("predictor.n_p must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("predictor.learning_rate must be > 0");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("predictor.noise_sigma must be >= 0");
    if (max_new_per_time < 1) throw std::invalid_argument("predictor.max_new_per_time must be >= 1");
}

// ---------------------------------------------------------------------------
// TimeBestStore

TimeBestStore::TimeBestStore(int k) : k_(k) {
    if (k < 1) throw std::invalid_argument("TimeBestStore: k must be >= 1");
}

void TimeBestStore::offer(int t, const Position& position, const Evaluation& eval) {
    auto& slot = entries_[t];
    for (const auto& e : slot) {
        if (e.position == position) return;
    }
    const bool full = slot.size() >= static_cast<std::size_t>(k_);
    if (full && !strictly_better(eval, slot.back().eval)) return;

    // Insert after every entry that is at least as good (ties keep arrival order).
    auto it = std::find_if(slot.begin(), slot.end(), [&](const StoreEntry& e) {
        return strictly_better(eval, e.eval);
    });
    slot.insert(it, StoreEntry{position, eval});
    if (slot.size() > static_cast<std::size_t>(k_)) slot.pop_back();
}

void TimeBestStore::record(int t, std::span<const Individual> candidates) {
    for (const auto& ind : candidates) {
        if (ind.eval) offer(t, ind.position, *ind.eval);
    }
}

const std::vector<StoreEntry>& TimeBestStore::at(int t) const {
    auto it = entries_.find(t);
    if (it == entries_.end()) {
        throw std::out_of_range("no stored solutions for time index " + std::to_string(t));
    }
    return it->second;
}

std::size_t TimeBestStore::total_entries() const {
    std::size_t n = 0;
    for (const auto& [t, slot] : entries_) n += slot.size();
    return n;
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<TrainingPair> build_samples(const TimeBestStore& store, int history,
                                        int max_new_per_time, RngStream& rng, int first_target,
                                        int last_target) {
    std::vector<TrainingPair> pairs;
    if (history < 1 || max_new_per_time < 1) return pairs;
    const int lo = std::max(first_target, history);
    const auto& all = store.entries();
    for (auto it = all.lower_bound(lo); it != all.end() && it->first <= last_target; ++it) {
        const int target = it->first;
        bool complete = true;
        std::vector<const std::vector<StoreEntry>*> slots;
        for (int t = target - history; t < target; ++t) {
            if (!store.has(t)) {
                complete = false;
                break;
            }
            slots.push_back(&store.at(t));
        }
        if (!complete) continue;

        std::uint64_t pool = 1;
        for (const auto* s : slots) pool *= s->size();
        const std::uint64_t draws = std::min<std::uint64_t>(pool, static_cast<std::uint64_t>(max_new_per_time));

        // Floyd's algorithm: `draws` distinct indices from [0, pool).
        std::vector<std::uint64_t> chosen;
        std::unordered_set<std::uint64_t> seen;
        for (std::uint64_t j = pool - draws; j < pool; ++j) {
            const std::uint64_t r = static_cast<std::uint64_t>(rng.index(static_cast<std::size_t>(j + 1)));
            const std::uint64_t pick = seen.count(r) ? j : r;
            seen.insert(pick);
            chosen.push_back(pick);
        }

        const Position& goal = store.at(target).front().position;
        for (std::uint64_t code : chosen) {
            TrainingPair pair;
            pair.inputs.reserve(slots.size());
            for (const auto* s : slots) {
                pair.inputs.push_back((*s)[code % s->size()].position);
                code /= s->size();
            }
            pair.target = goal;
            pairs.push_back(std::move(pair));
        }
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::size_t dimension, int history) : dimension_(dimension), history_(history) {
    if (dimension == 0) throw std::invalid_argument("Network: dimension must be >= 1");
    if (history < 1) throw std::invalid_argument("Network: history must be >= 1");
    params_.assign(b2_offset() + dimension_, 0.0);
}

Network Network::random(std::size_t dimension, int history, RngStream& rng) {
    Network net(dimension, history);
    const double lim1 = std::sqrt(1.0 / static_cast<double>(dimension));
    for (double& w : net.w1()) w = rng.uniform(-lim1, lim1);
    const double lim2 = std::sqrt(1.0 / static_cast<double>(net.concat_width()));
    for (double& w : net.w2()) w = rng.uniform(-lim2, lim2);
    return net;
}

Position Network::forward(std::span<const Position> inputs) const {
    if (inputs.size() != static_cast<std::size_t>(history_)) {
        throw std::invalid_argument("Network::forward: expected " + std::to_string(history_) +
                                    " input positions");
    }
    const double* W1 = params_.data();
    const double* B1 = params_.data() + b1_offset();
    const double* W2 = params_.data() + w2_offset();
    const double* B2 = params_.data() + b2_offset();
    const std::size_t width = concat_width();

    std::vector<double> H(width);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        if (inputs[s].size() != dimension_) {
            throw std::invalid_argument("Network::forward: input dimension mismatch");
        }
        for (std::size_t u = 0; u < kHidden; ++u) {
            double pre = B1[u];
            for (std::size_t i = 0; i < dimension_; ++i) pre += W1[u * dimension_ + i] * inputs[s][i];
            H[s * kHidden + u] = pre > 0.0 ? pre : 0.0;
        }
    }
    Position out(dimension_);
    for (std::size_t j = 0; j < dimension_; ++j) {
        double v = B2[j];
        for (std::size_t c = 0; c < width; ++c) v += W2[j * width + c] * H[c];
        out[j] = v;
    }
    return out;
}

double Network::accumulate(const TrainingPair& pair, double scale, std::vector<double>& grad) const {
    const double* W1 = params_.data();
    const double* B1 = params_.data() + b1_offset();
    const double* W2 = params_.data() + w2_offset();
    const double* B2 = params_.data() + b2_offset();
    const std::size_t width = concat_width();
    const std::size_t d = dimension_;

    std::vector<double> pre(width);
    std::vector<double> H(width);
    for (std::size_t s = 0; s < pair.inputs.size(); ++s) {
        for (std::size_t u = 0; u < kHidden; ++u) {
            double v = B1[u];
            for (std::size_t i = 0; i < d; ++i) v += W1[u * d + i] * pair.inputs[s][i];
            pre[s * kHidden + u] = v;
            H[s * kHidden + u] = v > 0.0 ? v : 0.0;
        }
    }
    std::vector<double> delta(d);
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double v = B2[j];
        for (std::size_t c = 0; c < width; ++c) v += W2[j * width + c] * H[c];
        const double e = v - pair.target[j];
        sq += e * e;
        delta[j] = scale * 2.0 * e / static_cast<double>(d);
    }

    double* gW1 = grad.data();
    double* gB1 = grad.data() + b1_offset();
    double* gW2 = grad.data() + w2_offset();
    double* gB2 = grad.data() + b2_offset();

    std::vector<double> dH(width, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        gB2[j] += delta[j];
        for (std::size_t c = 0; c < width; ++c) {
            gW2[j * width + c] += delta[j] * H[c];
            dH[c] += W2[j * width + c] * delta[j];
        }
    }
    for (std::size_t s = 0; s < pair.inputs.size(); ++s) {
        for (std::size_t u = 0; u < kHidden; ++u) {
            const std::size_t c = s * kHidden + u;
            if (pre[c] <= 0.0) continue;
            gB1[u] += dH[c];
            for (std::size_t i = 0; i < d; ++i) gW1[u * d + i] += dH[c] * pair.inputs[s][i];
        }
    }
    return sq / static_cast<double>(d);
}

double Network::loss(std::span<const TrainingPair> pairs) const {
    if (pairs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : pairs) {
        const Position out = forward(p.inputs);
        double sq = 0.0;
        for (std::size_t j = 0; j < dimension_; ++j) {
            const double e = out[j] - p.target[j];
            sq += e * e;
        }
        total += sq / static_cast<double>(dimension_);
    }
    return total / static_cast<double>(pairs.size());
}

std::vector<double> Network::gradient(std::span<const TrainingPair> pairs) const {
    std::vector<double> grad(params_.size(), 0.0);
    if (pairs.empty()) return grad;
    const double scale = 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) accumulate(p, scale, grad);
    return grad;
}

std::vector<double> Network::train(std::span<const TrainingPair> pairs, int epochs, int batch_size,
                                   double learning_rate, RngStream& rng) {
    if (pairs.empty()) throw std::invalid_argument("Network::train: no training pairs");
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("Network::train: bad schedule");

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(params_.size());
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(epochs));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            const double scale = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < end; ++b) {
                epoch_loss += accumulate(pairs[order[b]], scale, grad);
            }
            for (std::size_t q = 0; q < params_.size(); ++q) params_[q] -= learning_rate * grad[q];
        }
        history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return history;
}

namespace {

void write_row(std::ostream& out, std::span<const double> values) {
    char buf[40];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", values[i]);
        if (i) out << ',';
        out << buf;
    }
    out << '\n';
}

std::vector<double> read_row(std::istream& in, std::size_t expected, const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("snapshot truncated in " + what);
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::strtod(cell.c_str(), nullptr));
    if (values.size() != expected) throw std::runtime_error("snapshot row width mismatch in " + what);
    return values;
}

}  // namespace

void Network::write_snapshot(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << dimension_ << ',' << history_ << ",hidden=" << kHidden << '\n';
    const std::span<const double> p = params_;
    for (std::size_t u = 0; u < kHidden; ++u) write_row(out, p.subspan(u * dimension_, dimension_));
    write_row(out, p.subspan(b1_offset(), kHidden));
    for (std::size_t j = 0; j < dimension_; ++j) {
        write_row(out, p.subspan(w2_offset() + j * concat_width(), concat_width()));
    }
    write_row(out, p.subspan(b2_offset(), dimension_));
}

Network Network::read_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string header;
    std::getline(in, header);
    std::size_t d = 0;
    int n_t = 0;
    unsigned hidden = 0;
    if (std::sscanf(header.c_str(), "%zu,%d,hidden=%u", &d, &n_t, &hidden) != 3 || hidden != kHidden) {
        throw std::runtime_error(path.string() + ": bad snapshot header");
    }
    Network net(d, n_t);
    std::vector<double> flat;
    auto append = [&](const std::vector<double>& row) { flat.insert(flat.end(), row.begin(), row.end()); };
    for (std::size_t u = 0; u < kHidden; ++u) append(read_row(in, d, "W1"));
    append(read_row(in, kHidden, "b1"));
    for (std::size_t j = 0; j < d; ++j) append(read_row(in, net.concat_width(), "W2"));
    append(read_row(in, d, "b2"));
    std::copy(flat.begin(), flat.end(), net.params_.begin());
    return net;
}

// ---------------------------------------------------------------------------
// Predictor

std::vector<Position> noisy_neighbors(const Position& base, int n_p, double sigma,
                                      const Bounds& bounds, RngStream& rng) {
    std::vector<Position> out;
    out.reserve(static_cast<std::size_t>(std::max(n_p, 0)));
    const double scale = sigma * bounds.range();
    for (int i = 0; i < n_p; ++i) {
        Position p = base;
        if (i > 0 && scale > 0.0) {
            for (double& x : p) x += rng.normal(0.0, scale);
        }
        out.push_back(clamp_to_bounds(std::move(p), bounds));
    }
    return out;
}

namespace {

Network make_initial_network(std::size_t dimension, const PredictorConfig& config, RngStream& rng) {
    config.validate();
    return Network::random(dimension, config.history, rng);
}

}  // namespace

Predictor::Predictor(std::size_t dimension, const Bounds& bounds, const PredictorConfig& config,
                     std::uint64_t seed)
    : dimension_(dimension),
      bounds_(bounds),
      config_(config),
      rng_(seed, StreamId::Predictor),
      store_(config.k),
      net_(make_initial_network(dimension, config, rng_)) {}

void Predictor::observe(const Position& position, const Evaluation& eval) {
    store_.offer(eval.time_index, position, eval);
}

Position Predictor::to_unit(const Position& x) const {
    const double center = 0.5 * (bounds_.lower + bounds_.upper);
    const double half = 0.5 * bounds_.range();
    Position u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - center) / half;
    return u;
}

Position Predictor::from_unit(const Position& u) const {
    const double center = 0.5 * (bounds_.lower + bounds_.upper);
    const double half = 0.5 * bounds_.range();
    Position x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) x[i] = center + half * u[i];
    return x;
}

std::size_t Predictor::collect(int current_time) {
    const int last_target = current_time - 1;
    if (last_target < next_target_) return 0;
    auto fresh = build_samples(store_, config_.history, config_.max_new_per_time, rng_,
                               next_target_, last_target);
    next_target_ = last_target + 1;
    for (auto& pair : fresh) {
        for (auto& x : pair.inputs) x = to_unit(x);
        pair.target = to_unit(pair.target);
        samples_.push_back(std::move(pair));
    }
    return fresh.size();
}

std::optional<std::vector<double>> Predictor::train() {
    if (!ready()) return std::nullopt;
    auto losses = net_.train(samples_, config_.epochs, config_.batch_size, config_.learning_rate, rng_);
    trained_ = true;
    return losses;
}

std::optional<std::vector<Position>> Predictor::predict_neighbors(int target_time) {
    if (!trained_) return std::nullopt;
    std::vector<Position> inputs;
    for (int t = target_time - config_.history; t < target_time; ++t) {
        if (!store_.has(t)) return std::nullopt;
        inputs.push_back(to_unit(store_.at(t).front().position));
    }
    const Position base = from_unit(net_.forward(inputs));
    return noisy_neighbors(base, config_.n_p, config_.noise_sigma, bounds_, rng_);
}

}  // namespace dynde
