#include "mgrl/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "mgrl/errors.hpp"
#include "mgrl/microgrid.hpp"
#include "mgrl/seed.hpp"

namespace mgrl {

namespace {

using Kind = ProfileError::Kind;

constexpr int kEveningFirst = 17;
constexpr int kEveningLast = 21;
constexpr double kJitterFraction = 0.1;

void check_series(const Eigen::Ref<const Eigen::VectorXd>& v, const std::string& column) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (!std::isfinite(v[k])) throw ProfileError(Kind::Parse, "non-finite value in column " + column + " row " + std::to_string(k));
        if (v[k] < 0.0)
            throw ProfileError(Kind::NegativeValue,
                               "negative value " + std::to_string(v[k]) + " in column " + column + " row " + std::to_string(k));
    }
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep)) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    return out;
}

} // namespace

void validate_profiles(const ProfileSet& p, Eigen::Index expected_slots, std::span<const ProsumerSpec> specs) {
    const auto slots = p.consumer.size();
    if (slots != expected_slots || p.pv.rows() != expected_slots || p.consumption.rows() != expected_slots)
        throw ProfileError(Kind::LengthMismatch, "profile length " + std::to_string(slots) + " (pv " +
                                                     std::to_string(p.pv.rows()) + ", consumption " +
                                                     std::to_string(p.consumption.rows()) + ") does not match " +
                                                     std::to_string(expected_slots) + " slots");
    if (p.pv.cols() != p.consumption.cols())
        throw ProfileError(Kind::MissingColumn, "pv and consumption prosumer counts differ");

    for (Eigen::Index j = 0; j < p.pv.cols(); ++j) {
        check_series(p.pv.col(j), "pv_" + std::to_string(j + 1));
        check_series(p.consumption.col(j), "cons_" + std::to_string(j + 1));
    }
    check_series(p.consumer, "consumer");

    if (specs.empty()) return;
    if (static_cast<Eigen::Index>(specs.size()) != p.pv.cols())
        throw ProfileError(Kind::MissingColumn, "profile has " + std::to_string(p.pv.cols()) + " prosumers, specs have " +
                                                    std::to_string(specs.size()));
    for (Eigen::Index j = 0; j < p.pv.cols(); ++j) {
        const auto& s = specs[static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k < slots; ++k) {
            if (p.pv(k, j) > s.pv_peak + 1e-9)
                throw ProfileError(Kind::BoundViolation, "pv_" + std::to_string(j + 1) + " row " + std::to_string(k) +
                                                             " exceeds pv_peak");
            if (std::abs(p.pv(k, j) - p.consumption(k, j)) > s.p_inj_max + 1e-9)
                throw ProfileError(Kind::BoundViolation, "prosumer " + std::to_string(j + 1) + " row " +
                                                             std::to_string(k) +
                                                             " net load exceeds p_inj_max with an idle battery");
        }
    }
}

ProfileSet load_csv(const std::filesystem::path& path, Eigen::Index np, Eigen::Index slots) {
    std::ifstream in(path);
    if (!in) throw ProfileError(Kind::Io, "cannot open profile file " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ProfileError(Kind::Parse, "empty profile file " + path.string());
    const auto header = split(line, ',');

    auto column_of = [&](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return c;
        throw ProfileError(Kind::MissingColumn, "missing column '" + name + "' in " + path.string());
    };
    std::vector<std::size_t> pv_cols, cons_cols;
    for (Eigen::Index j = 1; j <= np; ++j) pv_cols.push_back(column_of("pv_" + std::to_string(j)));
    for (Eigen::Index j = 1; j <= np; ++j) cons_cols.push_back(column_of("cons_" + std::to_string(j)));
    const auto consumer_col = column_of("consumer");

    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw ProfileError(Kind::Parse, "line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::size_t used = 0;
            try {
                row[c] = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size())
                throw ProfileError(Kind::Parse, "line " + std::to_string(line_no) + " column '" + header[c] +
                                                    "': not a number: '" + cells[c] + "'");
        }
        rows.push_back(std::move(row));
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n != slots)
        throw ProfileError(Kind::LengthMismatch, path.string() + " has " + std::to_string(n) + " rows, expected " +
                                                     std::to_string(slots));

    ProfileSet p;
    p.pv.resize(n, np);
    p.consumption.resize(n, np);
    p.consumer.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& r = rows[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < np; ++j) {
            p.pv(k, j) = r[pv_cols[static_cast<std::size_t>(j)]];
            p.consumption(k, j) = r[cons_cols[static_cast<std::size_t>(j)]];
        }
        p.consumer[k] = r[consumer_col];
    }
    validate_profiles(p, slots);
    return p;
}

void save_csv(const std::filesystem::path& path, const ProfileSet& p) {
    std::ofstream out(path);
    if (!out) throw ProfileError(Kind::Io, "cannot write " + path.string());
    out << "slot";
    for (Eigen::Index j = 1; j <= p.num_prosumers(); ++j) out << ",pv_" << j;
    for (Eigen::Index j = 1; j <= p.num_prosumers(); ++j) out << ",cons_" << j;
    out << ",consumer\n" << std::setprecision(17);
    for (Eigen::Index k = 0; k < p.slots(); ++k) {
        out << k;
        for (Eigen::Index j = 0; j < p.num_prosumers(); ++j) out << ',' << p.pv(k, j);
        for (Eigen::Index j = 0; j < p.num_prosumers(); ++j) out << ',' << p.consumption(k, j);
        out << ',' << p.consumer[k] << '\n';
    }
}

Eigen::VectorXd synth_pv(double peak, int sunrise, int sunset, int slots) {
    if (!(std::isfinite(peak) && peak >= 0.0)) throw ContractViolation("pv peak must be finite and >= 0");
    if (!(0 <= sunrise && sunrise < sunset && sunset <= slots))
        throw ContractViolation("pv needs 0 <= sunrise < sunset <= slots");

    Eigen::VectorXd pv = Eigen::VectorXd::Zero(slots);
    const double span = sunset - sunrise;
    for (int k = sunrise; k <= sunset && k < slots; ++k)
        pv[k] = std::clamp(peak * std::sin(std::numbers::pi * (k - sunrise) / span), 0.0, peak);
    return pv;
}

Eigen::VectorXd synth_load(double base, double evening_peak, int slots, std::uint64_t seed) {
    if (!(std::isfinite(base) && base >= 0.0 && std::isfinite(evening_peak) && evening_peak >= 0.0))
        throw ContractViolation("load base and evening peak must be finite and >= 0");
    if (slots < 1) throw ContractViolation("slots must be >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-kJitterFraction, kJitterFraction);
    Eigen::VectorXd load(slots);
    for (int k = 0; k < slots; ++k) {
        const double bump = (k >= kEveningFirst && k <= kEveningLast) ? evening_peak : 0.0;
        load[k] = std::max(0.0, base + bump + base * jitter(rng));
    }
    return load;
}

ProfileSet synth_profiles(const SyntheticProfileParams& params, std::span<const ProsumerSpec> specs, int slots,
                          std::uint64_t seed) {
    if (params.prosumers.size() != specs.size())
        throw ContractViolation("synthetic parameters and prosumer specs differ in count");
    const auto np = static_cast<Eigen::Index>(specs.size());

    ProfileSet p;
    p.pv.resize(slots, np);
    p.consumption.resize(slots, np);
    for (Eigen::Index j = 0; j < np; ++j) {
        const auto& sp = params.prosumers[static_cast<std::size_t>(j)];
        p.pv.col(j) = synth_pv(specs[static_cast<std::size_t>(j)].pv_peak, sp.sunrise_slot, sp.sunset_slot, slots);
        p.consumption.col(j) =
            synth_load(sp.load_base, sp.load_evening_peak, slots, splitmix64(seed + static_cast<std::uint64_t>(j)));
    }
    p.consumer = synth_load(params.consumer_base, params.consumer_evening_peak, slots,
                            splitmix64(seed + static_cast<std::uint64_t>(np)));
    validate_profiles(p, slots, specs);
    return p;
}

} // namespace mgrl
