#include "mgrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mgrl/errors.hpp"
#include "mgrl/seed.hpp"

namespace mgrl {

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

std::vector<Eigen::Index> network_shape(Eigen::Index in, const std::vector<Eigen::Index>& hidden, std::size_t out) {
    std::vector<Eigen::Index> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(static_cast<Eigen::Index>(out));
    return sizes;
}

} // namespace

void AgentHyperparams::validate() const {
    require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
    require(learning_rate > 0.0, "learning rate must be > 0");
    require(0.0 <= epsilon_end && epsilon_end <= epsilon_start && epsilon_start <= 1.0,
            "need 0 <= epsilon_end <= epsilon_start <= 1");
    require(epsilon_decay_episodes >= 0, "epsilon_decay_episodes must be >= 0");
    require(replay_capacity >= 1 && batch_size >= 1 && target_sync_interval >= 1,
            "replay capacity, batch size and sync interval must be >= 1");
    require(batch_size <= replay_capacity, "batch size exceeds replay capacity");
    require(huber_delta > 0.0, "huber delta must be > 0");
    for (auto h : hidden) require(h >= 1, "hidden layer sizes must be >= 1");
}

Eigen::VectorXd encode_grid_state(const GridObservation& obs, const GridNorms& n) {
    require(n.cost > 0.0 && n.payment > 0.0 && n.demand > 0.0, "normalization constants must be > 0");
    require(obs.generator_costs.size() == n.num_generators, "generator cost vector has wrong length");
    require(obs.prosumer_payments.size() == n.num_prosumers, "prosumer payment vector has wrong length");
    require(obs.generator_costs.allFinite() && obs.prosumer_payments.allFinite() && std::isfinite(obs.total_demand),
            "non-finite grid observation");
    require(obs.total_demand >= 0.0, "negative total demand");

    Eigen::VectorXd s(n.dim());
    const auto base = n.num_generators + n.num_prosumers;
    s.head(n.num_generators) = obs.generator_costs / n.cost;
    s.segment(n.num_generators, n.num_prosumers) = obs.prosumer_payments / n.payment;
    s[base] = obs.total_demand / n.demand;
    if (n.day_slots > 0) s.tail<2>() = time_phase(obs.slot, n.day_slots);
    return s;
}

Eigen::Vector2d time_phase(Eigen::Index slot, Eigen::Index day_slots) {
    require(day_slots > 0, "day length must be positive");
    require(slot >= 0, "negative slot");
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(slot % day_slots) / static_cast<double>(day_slots);
    return {0.5 + 0.5 * std::sin(angle), 0.5 + 0.5 * std::cos(angle)};
}

Eigen::VectorXd encode_prosumer_state(const ProsumerObservation& obs, const ProsumerNorms& n) {
    require(n.soc > 0.0 && n.pv > 0.0 && n.consumption > 0.0 && n.price > 0.0, "normalization constants must be > 0");
    require(std::isfinite(obs.soc) && std::isfinite(obs.pv_now) && std::isfinite(obs.consumption_now) &&
                std::isfinite(obs.buy_price_now),
            "non-finite prosumer observation");
    require(obs.soc >= 0.0 && obs.soc <= 1.0, "SoC outside [0, 1]");
    require(obs.pv_now >= 0.0 && obs.consumption_now >= 0.0 && obs.buy_price_now >= 0.0,
            "negative prosumer observation");
    Eigen::VectorXd s(n.dim());
    s.head<4>() << obs.soc / n.soc, obs.pv_now / n.pv, obs.consumption_now / n.consumption, obs.buy_price_now / n.price;
    if (n.day_slots > 0) s.tail<2>() = time_phase(obs.slot, n.day_slots);
    return s;
}

std::size_t argmax(const Eigen::Ref<const Eigen::VectorXd>& q) {
    require(q.size() > 0, "empty action values");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = i;
    return static_cast<std::size_t>(best);
}

std::size_t select_action(const Eigen::Ref<const Eigen::VectorXd>& q, double epsilon, std::mt19937_64& rng) {
    require(q.size() > 0, "empty action values");
    require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
    if (epsilon > 0.0) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) < epsilon) {
            std::uniform_int_distribution<Eigen::Index> pick(0, q.size() - 1);
            return static_cast<std::size_t>(pick(rng));
        }
    }
    return argmax(q);
}

double epsilon_at(int episode, const AgentHyperparams& hp) {
    require(episode >= 0, "episode must be >= 0");
    if (episode >= hp.epsilon_decay_episodes) return hp.epsilon_end;
    const double frac = static_cast<double>(episode) / hp.epsilon_decay_episodes;
    return hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * frac;
}

double discounted_return(std::span<const double> rewards, double gamma) {
    double g = 0.0;
    for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) g = *it + gamma * g;
    return g;
}

Batch make_batch(std::span<const Transition> ts) {
    require(!ts.empty(), "empty batch");
    const auto dim = ts.front().state.size();
    const auto n = static_cast<Eigen::Index>(ts.size());
    Batch b;
    b.states.resize(dim, n);
    b.next_states.resize(dim, n);
    b.rewards.resize(n);
    b.actions.reserve(ts.size());
    b.terminal.reserve(ts.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = ts[static_cast<std::size_t>(i)];
        require(t.state.size() == dim && t.next_state.size() == dim, "transition state dimension mismatch");
        b.states.col(i) = t.state;
        b.next_states.col(i) = t.next_state;
        b.rewards[i] = t.reward;
        b.actions.push_back(t.action);
        b.terminal.push_back(t.terminal ? 1 : 0);
    }
    return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, Eigen::Index state_dim, std::size_t num_actions)
    : capacity_(capacity), state_dim_(state_dim), num_actions_(num_actions) {
    require(capacity >= 1, "replay capacity must be >= 1");
    require(state_dim >= 1 && num_actions >= 1, "replay needs positive state and action dimensions");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    require(t.state.size() == state_dim_ && t.next_state.size() == state_dim_, "transition state dimension mismatch");
    require(t.action < num_actions_, "transition action out of range");
    require(std::isfinite(t.reward) && t.state.allFinite() && t.next_state.allFinite(), "non-finite transition");
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    require(i < data_.size(), "replay index out of range");
    const std::size_t oldest = data_.size() < capacity_ ? 0 : cursor_;
    return data_[(oldest + i) % data_.size()];
}

Batch ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
    require(batch_size >= 1 && data_.size() >= batch_size, "not enough transitions to sample a batch");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    const auto n = static_cast<Eigen::Index>(batch_size);
    Batch b;
    b.states.resize(state_dim_, n);
    b.next_states.resize(state_dim_, n);
    b.rewards.resize(n);
    b.actions.resize(batch_size);
    b.terminal.resize(batch_size);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = data_[pick(rng)];
        b.states.col(i) = t.state;
        b.next_states.col(i) = t.next_state;
        b.rewards[i] = t.reward;
        b.actions[static_cast<std::size_t>(i)] = t.action;
        b.terminal[static_cast<std::size_t>(i)] = t.terminal ? 1 : 0;
    }
    return b;
}

Eigen::VectorXd dqn_target(const Batch& batch, const Network& target_net, double gamma) {
    require(batch.size() > 0, "empty batch");
    const Eigen::MatrixXd next_q = target_net.forward_batch(batch.next_states);
    Eigen::VectorXd y(batch.size());
    for (Eigen::Index i = 0; i < batch.size(); ++i)
        y[i] = bellman_target(batch.rewards[i], gamma, next_q.col(i).maxCoeff(),
                              batch.terminal[static_cast<std::size_t>(i)] != 0);
    return y;
}

double dqn_update(Network& online, const Network& target, const Batch& batch, Adam& opt, const AgentHyperparams& hp) {
    require(batch.size() > 0, "empty batch");
    require(batch.states.rows() == online.input_size(), "batch state dimension does not match the network");
    const auto y = dqn_target(batch, target, hp.gamma);
    const Eigen::MatrixXd q = online.forward_batch(batch.states);

    const auto n = batch.size();
    Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(q.rows(), n);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(i)]);
        require(a < q.rows(), "batch action out of range");
        const double err = q(a, i) - y[i];
        loss += huber(err, hp.huber_delta);
        out_grad(a, i) = huber_grad(err, hp.huber_delta) / static_cast<double>(n);
    }
    const auto grads = online.backward_batch(batch.states, out_grad);
    optimizer_step(online, grads, opt);
    return loss / static_cast<double>(n);
}

QTable::QTable(std::size_t num_actions, std::vector<std::vector<double>> bin_edges)
    : num_actions_(num_actions), edges_(std::move(bin_edges)) {
    require(num_actions >= 1, "QTable needs at least one action");
    for (const auto& e : edges_)
        require(std::is_sorted(e.begin(), e.end()), "bin edges must be ascending");
}

QTable QTable::uniform(std::size_t num_actions, Eigen::Index dim, double lo, double hi, int bins) {
    require(hi > lo && bins >= 1, "uniform bins need hi > lo and bins >= 1");
    std::vector<double> inner;
    for (int b = 1; b < bins; ++b) inner.push_back(lo + (hi - lo) * b / bins);
    return QTable(num_actions, std::vector<std::vector<double>>(static_cast<std::size_t>(dim), inner));
}

QTable::Key QTable::discretize(const Eigen::Ref<const Eigen::VectorXd>& f) const {
    require(static_cast<std::size_t>(f.size()) == edges_.size(), "feature dimension does not match the bin edges");
    require(f.allFinite(), "non-finite features");
    Key key(edges_.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const auto& e = edges_[i];
        key[i] = static_cast<int>(std::upper_bound(e.begin(), e.end(), f[static_cast<Eigen::Index>(i)]) - e.begin());
    }
    return key;
}

double QTable::value(const Key& s, std::size_t a) const {
    require(a < num_actions_, "action out of range");
    const auto it = table_.find(s);
    return it == table_.end() ? 0.0 : it->second[a];
}

void QTable::set(const Key& s, std::size_t a, double q) {
    require(a < num_actions_, "action out of range");
    require(std::isfinite(q), "non-finite Q value");
    auto [it, inserted] = table_.try_emplace(s, num_actions_, 0.0);
    it->second[a] = q;
}

double QTable::max_value(const Key& s) const {
    const auto it = table_.find(s);
    return it == table_.end() ? 0.0 : *std::max_element(it->second.begin(), it->second.end());
}

double tabular_update(QTable& q, const Eigen::Ref<const Eigen::VectorXd>& s, std::size_t a, double r,
                      const Eigen::Ref<const Eigen::VectorXd>& s_next, const AgentHyperparams& hp, bool terminal) {
    const auto key = q.discretize(s);
    const auto next_key = q.discretize(s_next);
    const double alpha = hp.learning_rate;
    const double updated =
        (1.0 - alpha) * q.value(key, a) + alpha * bellman_target(r, hp.gamma, q.max_value(next_key), terminal);
    q.set(key, a, updated);
    return updated;
}

void FiniteMdp::validate() const {
    require(num_states >= 1 && num_actions >= 1, "MDP needs states and actions");
    require(static_cast<Eigen::Index>(transitions.size()) == num_actions, "one transition matrix per action required");
    require(rewards.rows() == num_states && rewards.cols() == num_actions, "reward table must be S x A");
    require(rewards.allFinite(), "non-finite rewards");
    for (const auto& p : transitions) {
        require(p.rows() == num_states && p.cols() == num_states, "transition matrix must be S x S");
        require((p.array() >= 0.0).all(), "negative transition probability");
        for (Eigen::Index s = 0; s < num_states; ++s)
            require(std::abs(p.row(s).sum() - 1.0) < 1e-9, "transition row " + std::to_string(s) + " is not stochastic");
    }
}

FiniteMdp FiniteMdp::deterministic(const Eigen::MatrixXi& next_state, const Eigen::MatrixXd& rewards) {
    FiniteMdp mdp;
    mdp.num_states = next_state.rows();
    mdp.num_actions = next_state.cols();
    mdp.rewards = rewards;
    for (Eigen::Index a = 0; a < mdp.num_actions; ++a) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_states);
        for (Eigen::Index s = 0; s < mdp.num_states; ++s) {
            require(next_state(s, a) >= 0 && next_state(s, a) < mdp.num_states, "next state out of range");
            p(s, next_state(s, a)) = 1.0;
        }
        mdp.transitions.push_back(std::move(p));
    }
    mdp.validate();
    return mdp;
}

Eigen::MatrixXd value_iteration(const FiniteMdp& mdp, double gamma, double tol, int max_iterations) {
    mdp.validate();
    require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
    require(tol > 0.0, "tolerance must be > 0");

    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
    for (int it = 0; it < max_iterations; ++it) {
        const Eigen::VectorXd v = q.rowwise().maxCoeff();
        Eigen::MatrixXd next(mdp.num_states, mdp.num_actions);
        for (Eigen::Index a = 0; a < mdp.num_actions; ++a)
            next.col(a) = mdp.rewards.col(a) + gamma * mdp.transitions[static_cast<std::size_t>(a)] * v;
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (change < tol) return q;
    }
    throw ContractViolation("value iteration did not converge within the iteration budget");
}

DqnAgent::DqnAgent(Eigen::Index state_dim, std::size_t num_actions, const AgentHyperparams& hp, std::uint64_t seed)
    : hp_(hp), online_(Network::init(network_shape(state_dim, hp.hidden, num_actions), splitmix64(seed))),
      target_(online_), replay_(hp.replay_capacity, state_dim, num_actions), rng_(splitmix64(seed + 1)) {
    hp_.validate();
    opt_ = Adam::for_network(online_, hp_.learning_rate);
}

std::size_t DqnAgent::act(const Eigen::Ref<const Eigen::VectorXd>& state, double epsilon) {
    return select_action(online_.forward(state), epsilon, rng_);
}

std::size_t DqnAgent::greedy(const Eigen::Ref<const Eigen::VectorXd>& state) const {
    return argmax(online_.forward(state));
}

double DqnAgent::observe(Transition t) {
    replay_.push(std::move(t));
    if (replay_.size() < hp_.batch_size) return -1.0;
    const auto batch = replay_.sample(hp_.batch_size, rng_);
    const double loss = dqn_update(online_, target_, batch, opt_, hp_);
    if (++updates_ % hp_.target_sync_interval == 0) sync_target();
    return loss;
}

void DqnAgent::load(Network net) {
    require(net.layer_sizes() == online_.layer_sizes(), "loaded network shape does not match the agent");
    online_ = std::move(net);
    target_ = online_;
    opt_ = Adam::for_network(online_, hp_.learning_rate);
}

} // namespace mgrl
