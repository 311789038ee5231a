#pragma once

#include <climits>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dynde/core.hpp"

namespace dynde {

struct PredictorConfig {
    int k = 3;                  // best positions kept per period
    int history = 5;            // consecutive past periods fed to the network
    int epochs = 4;
    int batch_size = 4;
    int min_batch = 20;         // samples required before the first training
    int n_p = 5;                // predicted neighbours injected per change
    double learning_rate = 0.01;
    double noise_sigma = 0.01;  // neighbour noise, fraction of (U - L)
    int max_new_per_time = 32;  // samples drawn per completed window

    void validate() const;
};

struct StoreEntry {
    Position position;
    Evaluation eval;
};

/// The k feasibility-best distinct positions evaluated during each period.
class TimeBestStore {
public:
    explicit TimeBestStore(int k);

    /// Merges one evaluated position into period t.
    void offer(int t, const Position& position, const Evaluation& eval);
    /// Merges every evaluated candidate into period t.
    void record(int t, std::span<const Individual> candidates);

    int k() const { return k_; }
    bool has(int t) const { return entries_.count(t) != 0; }
    /// Rank-ordered, best first. Throws std::out_of_range when t is missing.
    const std::vector<StoreEntry>& at(int t) const;
    std::size_t periods() const { return entries_.size(); }
    std::size_t total_entries() const;
    const std::map<int, std::vector<StoreEntry>>& entries() const { return entries_; }

private:
    int k_;
    std::map<int, std::vector<StoreEntry>> entries_;
};

struct TrainingPair {
    std::vector<Position> inputs;  // oldest first
    Position target;
};

/// For every window of `history` consecutive stored periods followed by a
/// stored target period in [first_target, last_target], draws
/// min(max_new_per_time, prod of slot sizes) distinct input combinations
/// without replacement. The target is always the rank-1 entry.
std::vector<TrainingPair> build_samples(const TimeBestStore& store, int history,
                                        int max_new_per_time, RngStream& rng,
                                        int first_target = 0, int last_target = INT_MAX);

/// Two-layer feed-forward network. A shared first layer maps each of the
/// `history` input positions to a 4-wide ReLU code; the codes are concatenated
/// and a linear layer maps them to a d-dimensional output.
///
/// Parameters live in one flat vector, in this order:
///   W1 (4 x d, row-major), b1 (4), W2 (d x 4*history, row-major), b2 (d).
class Network {
public:
    static constexpr std::size_t kHidden = 4;

    /// All-zero weights.
    Network(std::size_t dimension, int history);
    /// Weights uniform in +-sqrt(1 / fan_in), biases zero.
    static Network random(std::size_t dimension, int history, RngStream& rng);

    std::size_t dimension() const { return dimension_; }
    int history() const { return history_; }

    Position forward(std::span<const Position> inputs) const;

    /// Mean over pairs of (1/d) * sum_j (out_j - target_j)^2.
    double loss(std::span<const TrainingPair> pairs) const;
    /// Gradient of loss() with respect to parameters().
    std::vector<double> gradient(std::span<const TrainingPair> pairs) const;

    /// Mini-batch gradient descent, pairs reshuffled each epoch. Returns the
    /// mean pre-update batch loss of each epoch.
    std::vector<double> train(std::span<const TrainingPair> pairs, int epochs, int batch_size,
                              double learning_rate, RngStream& rng);

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> w1() { return {params_.data(), w1_size()}; }
    std::span<double> b1() { return {params_.data() + b1_offset(), kHidden}; }
    std::span<double> w2() { return {params_.data() + w2_offset(), w2_size()}; }
    std::span<double> b2() { return {params_.data() + b2_offset(), dimension_}; }

    /// Text snapshot: header `d,n_t,hidden=4`, then W1, b1, W2, b2, one row per line.
    void write_snapshot(const std::filesystem::path& path) const;
    static Network read_snapshot(const std::filesystem::path& path);

private:
    std::size_t concat_width() const { return kHidden * static_cast<std::size_t>(history_); }
    std::size_t w1_size() const { return kHidden * dimension_; }
    std::size_t b1_offset() const { return w1_size(); }
    std::size_t w2_offset() const { return b1_offset() + kHidden; }
    std::size_t w2_size() const { return dimension_ * concat_width(); }
    std::size_t b2_offset() const { return w2_offset() + w2_size(); }

    // Adds the gradient of one pair's squared error, scaled by `scale`, into grad.
    // Returns the pair's (1/d)-normalized squared error.
    double accumulate(const TrainingPair& pair, double scale, std::vector<double>& grad) const;

    std::size_t dimension_;
    int history_;
    std::vector<double> params_;
};

/// The network together with its training data and the period store. The
/// network works in coordinates mapped affinely from [L, U] to [-1, 1].
class Predictor {
public:
    Predictor(std::size_t dimension, const Bounds& bounds, const PredictorConfig& config,
              std::uint64_t seed);

    void observe(const Position& position, const Evaluation& eval);

    /// Builds samples for every not-yet-collected window whose target period
    /// is earlier than current_time. Returns how many were added.
    std::size_t collect(int current_time);

    bool ready() const { return samples_.size() >= static_cast<std::size_t>(config_.min_batch); }
    bool trained() const { return trained_; }

    /// Continues training over all retained samples. nullopt below min_batch.
    std::optional<std::vector<double>> train();

    /// n_p positions around the network's forecast for target_time; the first
    /// is the forecast itself. nullopt when untrained or history is missing.
    std::optional<std::vector<Position>> predict_neighbors(int target_time);

    const TimeBestStore& store() const { return store_; }
    TimeBestStore& store() { return store_; }
    const Network& network() const { return net_; }
    std::size_t sample_count() const { return samples_.size(); }
    const PredictorConfig& config() const { return config_; }

    Position to_unit(const Position& x) const;
    Position from_unit(const Position& u) const;

private:
    std::size_t dimension_;
    Bounds bounds_;
    PredictorConfig config_;
    RngStream rng_;
    TimeBestStore store_;
    Network net_;
    std::vector<TrainingPair> samples_;
    int next_target_ = 0;
    bool trained_ = false;
};

/// Neighbours of `base`: the base itself first, then copies perturbed by
/// N(0, sigma * (U - L)) per coordinate; all clamped to the bounds.
std::vector<Position> noisy_neighbors(const Position& base, int n_p, double sigma,
                                      const Bounds& bounds, RngStream& rng);

}  // namespace dynde
