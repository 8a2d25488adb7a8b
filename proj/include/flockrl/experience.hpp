#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flockrl/env.hpp"
#include "flockrl/rng.hpp"

namespace flockrl {

// One stored experience <o, a, r, o', done>, shared by the replay buffer and
// the demonstration buffer. `done` marks episode ends so Bellman targets can
// be masked there.
struct Transition {
    std::vector<std::vector<double>> obs;       // n observations
    std::vector<ActionCommand> act;             // n actions
    std::vector<double> rew;                    // n rewards
    std::vector<std::vector<double>> next_obs;  // n observations
    bool done = false;
};

// Ring buffer with FIFO eviction. The demonstration buffer is the same
// structure, write-locked after loading.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return storage_.empty(); }

    // i = 0 is the oldest surviving entry
    const Transition& at(std::size_t i) const;

    // M uniform draws with replacement; deterministic given the rng state.
    std::vector<const Transition*> sample_minibatch(std::size_t M, Rng& rng) const;

    void write_lock() { locked_ = true; }
    bool write_locked() const { return locked_; }

    // number of sample_minibatch calls; used to assert which algorithms
    // actually consult the demonstration buffer
    std::uint64_t sample_calls() const { return sample_calls_; }

    int num_agents() const { return n_; }
    int obs_len() const { return obs_len_; }

    // Checkpoint support: sampling indexes physical storage, so a resumed run
    // must restore the exact ring layout to sample identically.
    const Transition& raw_at(std::size_t i) const { return storage_[i]; }
    std::size_t ring_cursor() const { return next_; }
    void restore_ring(std::vector<Transition> storage, std::size_t cursor);

private:
    void validate_shape(const Transition& t) const;

    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t next_ = 0;  // ring write cursor once full
    bool locked_ = false;
    int n_ = -1;
    int obs_len_ = -1;
    mutable std::uint64_t sample_calls_ = 0;
};

// JSON-Lines demonstration file: one header object, then one Transition per
// line with fields obs, act, rew, next_obs, done. Doubles survive the round
// trip exactly.
void save_demos(const ReplayBuffer& buf, const std::string& path, const nlohmann::json& meta);

// Streaming writer used by the demonstration generator so paper-scale files
// never sit in memory; the header (which carries the final count and
// metadata) is prepended when finish() runs.
class DemoFileWriter {
public:
    explicit DemoFileWriter(const std::string& path);
    ~DemoFileWriter();
    void add(const Transition& t);
    void finish(const nlohmann::json& meta);
    std::size_t count() const { return count_; }

private:
    std::string path_;
    std::string tmp_path_;
    std::unique_ptr<std::ofstream> tmp_;
    std::size_t count_ = 0;
    int n_ = -1;
    int obs_len_ = -1;
    bool finished_ = false;
};

// Loads a demonstration file into a write-locked buffer sized to its count.
ReplayBuffer load_demos(const std::string& path, nlohmann::json* meta_out = nullptr);

nlohmann::json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& j, long line_for_errors);

}  // namespace flockrl
