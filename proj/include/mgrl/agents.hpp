#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mgrl/microgrid.hpp"
#include "mgrl/mlp.hpp"

namespace mgrl {

using Network = Mlp<double>;
using Adam = AdamState<double>;

struct AgentHyperparams {
    double gamma = 0.95;
    double learning_rate = 1e-3;  // alpha: tabular step size, or the Adam rate for DQN
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    int epsilon_decay_episodes = 4000;
    std::size_t replay_capacity = 10000;
    std::size_t batch_size = 32;
    std::size_t target_sync_interval = 200;
    std::vector<Eigen::Index> hidden = {64, 64};
    double huber_delta = 1.0;
    // Append the time-of-day phase to both state encodings. Off keeps the plain observation vectors.
    bool time_features = false;

    void validate() const;
};

struct GridNorms {
    Eigen::Index num_generators = 2;
    Eigen::Index num_prosumers = 3;
    double cost = 1.0;     // $
    double payment = 1.0;  // $
    double demand = 1.0;   // kW
    // Slots per day when the encoding appends the time-of-day phase, 0 to leave it out.
    Eigen::Index day_slots = 0;

    Eigen::Index dim() const { return num_generators + num_prosumers + 1 + (day_slots > 0 ? 2 : 0); }
};

struct ProsumerNorms {
    double soc = 1.0;
    double pv = 1.0;           // kW
    double consumption = 1.0;  // kW
    double price = 1.0;        // $/kWh
    Eigen::Index day_slots = 0;  // as in GridNorms

    Eigen::Index dim() const { return 4 + (day_slots > 0 ? 2 : 0); }
};

// [F / cost, Omega / payment, demand / demand], then the phase pair when enabled
Eigen::VectorXd encode_grid_state(const GridObservation& obs, const GridNorms& norms);
// [soc, pv, consumption, buy price], each scaled, then the phase pair when enabled
Eigen::VectorXd encode_prosumer_state(const ProsumerObservation& obs, const ProsumerNorms& norms);
// Position of `slot` on the daily cycle as (1 + sin, 1 + cos) / 2.
Eigen::Vector2d time_phase(Eigen::Index slot, Eigen::Index day_slots);

// Epsilon-greedy; greedy ties go to the lowest index.
std::size_t select_action(const Eigen::Ref<const Eigen::VectorXd>& q_values, double epsilon, std::mt19937_64& rng);
std::size_t argmax(const Eigen::Ref<const Eigen::VectorXd>& q_values);

// Linear decay from epsilon_start to epsilon_end over epsilon_decay_episodes, constant afterwards.
double epsilon_at(int episode, const AgentHyperparams& hp);

// r + gamma * max_next unless terminal. Shared by the DQN and tabular updates.
inline double bellman_target(double reward, double gamma, double max_next_q, bool terminal) {
    return terminal ? reward : reward + gamma * max_next_q;
}

double discounted_return(std::span<const double> rewards, double gamma);

struct Transition {
    Eigen::VectorXd state;
    std::size_t action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool terminal = false;
};

struct Batch {
    Eigen::MatrixXd states;       // state_dim x B
    Eigen::MatrixXd next_states;  // state_dim x B
    std::vector<std::size_t> actions;
    Eigen::VectorXd rewards;
    std::vector<char> terminal;

    Eigen::Index size() const { return rewards.size(); }
};

Batch make_batch(std::span<const Transition> transitions);

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, Eigen::Index state_dim, std::size_t num_actions);

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    // i = 0 is the oldest stored transition.
    const Transition& at(std::size_t i) const;
    // Uniform with replacement; needs size() >= batch_size.
    Batch sample(std::size_t batch_size, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    Eigen::Index state_dim_;
    std::size_t num_actions_;
    std::vector<Transition> data_;
    std::size_t cursor_ = 0;
};

Eigen::VectorXd dqn_target(const Batch& batch, const Network& target_net, double gamma);

// One Huber-loss Adam step on Q_online(s, a) towards dqn_target. Returns the mean loss before the step.
double dqn_update(Network& online, const Network& target, const Batch& batch, Adam& opt, const AgentHyperparams& hp);

inline Network sync_target(const Network& online) { return online; }

// Lookup-table Q-function over uniformly binned features. Unseen entries read as 0.
class QTable {
public:
    using Key = std::vector<int>;

    QTable(std::size_t num_actions, std::vector<std::vector<double>> bin_edges);
    // `bins` equal-width bins on [lo, hi] for each of `dim` features.
    static QTable uniform(std::size_t num_actions, Eigen::Index dim, double lo, double hi, int bins = 10);

    Key discretize(const Eigen::Ref<const Eigen::VectorXd>& features) const;
    double value(const Key& s, std::size_t a) const;
    void set(const Key& s, std::size_t a, double q);
    double max_value(const Key& s) const;
    std::size_t num_actions() const { return num_actions_; }

private:
    std::size_t num_actions_;
    std::vector<std::vector<double>> edges_;
    std::map<Key, std::vector<double>> table_;
};

// Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a')). Returns the new entry.
double tabular_update(QTable& q, const Eigen::Ref<const Eigen::VectorXd>& s, std::size_t a, double r,
                      const Eigen::Ref<const Eigen::VectorXd>& s_next, const AgentHyperparams& hp,
                      bool terminal = false);

struct FiniteMdp {
    Eigen::Index num_states = 0;
    Eigen::Index num_actions = 0;
    std::vector<Eigen::MatrixXd> transitions;  // one row-stochastic S x S matrix per action
    Eigen::MatrixXd rewards;                    // S x A expected immediate reward

    void validate() const;
    // Deterministic MDP from next_state(s, a) and reward(s, a) tables.
    static FiniteMdp deterministic(const Eigen::MatrixXi& next_state, const Eigen::MatrixXd& rewards);
};

// Bellman optimality iteration until the sup-norm change drops below tol. Returns S x A.
Eigen::MatrixXd value_iteration(const FiniteMdp& mdp, double gamma, double tol, int max_iterations = 1'000'000);

// Online/target network pair with its replay buffer, optimizer and exploration stream.
class DqnAgent {
public:
    DqnAgent(Eigen::Index state_dim, std::size_t num_actions, const AgentHyperparams& hp, std::uint64_t seed);

    std::size_t act(const Eigen::Ref<const Eigen::VectorXd>& state, double epsilon);
    std::size_t greedy(const Eigen::Ref<const Eigen::VectorXd>& state) const;

    // Stores the transition and, once the buffer holds a batch, performs one update. Returns the loss, or a
    // negative value when no update ran.
    double observe(Transition t);

    void sync_target() { target_ = mgrl::sync_target(online_); }
    // Replaces both online and target networks.
    void load(Network net);

    const Network& online() const { return online_; }
    const Network& target() const { return target_; }
    const Adam& optimizer() const { return opt_; }
    const ReplayBuffer& replay() const { return replay_; }
    std::uint64_t updates() const { return updates_; }
    const AgentHyperparams& hyperparams() const { return hp_; }

private:
    AgentHyperparams hp_;
    Network online_;
    Network target_;
    Adam opt_;
    ReplayBuffer replay_;
    std::mt19937_64 rng_;
    std::uint64_t updates_ = 0;
};

} // namespace mgrl
