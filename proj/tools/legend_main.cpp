#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "legend/config.hpp"
#include "legend/micro.hpp"
#include "legend/planner.hpp"
#include "legend/simkernel.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string resolve_out_dir(const std::string& configured) {
    if (const char* env = std::getenv("LEGEND_OUT_DIR")) return env;
    return configured;
}

int cmd_run(const std::string& config_path) {
    legend::ExperimentConfig config = legend::parse_config(config_path);
    const fs::path out_dir = resolve_out_dir(config.out_dir);
    fs::create_directories(out_dir);
    write_file(out_dir / "config_echo.ini", legend::config_echo(config));

    legend::ExperimentLog log = legend::run_experiment(config);
    write_file(out_dir / "rounds.csv", legend::log_to_csv(log));
    write_file(out_dir / "summary.csv", legend::summary_to_csv(log));

    std::cout << "rounds=" << log.rounds.size() << " cum_time=" << log.cumulative_time
              << " cum_bytes=" << log.cumulative_bytes << " out_dir=" << out_dir.string()
              << "\n";
    if (!log.rounds.empty()) {
        const auto& last = log.rounds.back();
        std::cout << "final eval_loss=" << last.eval_loss
                  << " eval_acc=" << last.eval_accuracy
                  << " train_acc=" << last.train_accuracy << "\n";
    }
    return 0;
}

struct ProfileRow {
    int device_id;
    double mu, beta, forward, compute_budget, comm_budget;
};

std::vector<ProfileRow> read_profile_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw legend::ConfigError("cannot open profile file: " + path);
    std::vector<ProfileRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.find("device_id") != std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) {
            throw legend::ConfigError("profile line " + std::to_string(lineno) +
                                      ": expected 6 columns "
                                      "(device_id,mu,beta,forward,compute_budget,comm_budget)");
        }
        try {
            ProfileRow r;
            r.device_id = std::stoi(cells[0]);
            r.mu = std::stod(cells[1]);
            r.beta = std::stod(cells[2]);
            r.forward = std::stod(cells[3]);
            r.compute_budget = cells[4] == "inf" ? 1e300 : std::stod(cells[4]);
            r.comm_budget = cells[5] == "inf" ? 1e300 : std::stod(cells[5]);
            rows.push_back(r);
        } catch (const std::exception&) {
            throw legend::ConfigError("profile line " + std::to_string(lineno) +
                                      ": malformed number");
        }
    }
    if (rows.empty()) throw legend::ConfigError("profile file has no rows: " + path);
    return rows;
}

int cmd_plan(const std::string& profile_path, int layers, int psi, int lambda,
             double epsilon, double chat, double cost_c, double cost_b,
             const std::string& depth_rule) {
    const auto rows = read_profile_csv(profile_path);

    legend::PlannerParams params;
    params.num_layers = layers;
    params.rank_budget = psi;
    params.rank_step = lambda;
    params.waiting_threshold = epsilon;
    params.fixed_forward_cost = chat;
    params.compute_cost_per_rank = cost_c;
    params.comm_cost_per_rank = cost_b;
    if (depth_rule == "endpoint_normalized") {
        params.depth_rule = legend::DepthRule::EndpointNormalized;
    } else if (depth_rule == "paper_literal") {
        params.depth_rule = legend::DepthRule::Literal;
    } else {
        throw UsageError("--depth-rule must be endpoint_normalized or paper_literal");
    }

    std::map<int, legend::CapacityEstimate> estimates;
    std::map<int, double> forward_times;
    std::map<int, legend::DeviceBudget> budgets;
    std::map<int, legend::LoraConfig> prev;
    const auto ranks = legend::global_rank_distribution(layers, psi, lambda);
    for (const auto& r : rows) {
        legend::CapacityEstimate est;
        est.compute_time_per_layer = r.mu;
        est.upload_time_per_rank = r.beta;
        est.initialized = true;
        estimates[r.device_id] = est;
        forward_times[r.device_id] = r.forward;
        budgets[r.device_id] = {r.compute_budget, r.comm_budget};
        prev[r.device_id] = legend::slice_config(ranks, layers);
    }

    const legend::Plan plan =
        legend::configure(estimates, forward_times, params, budgets, prev);
    std::cout << "depth_gap=" << plan.depth_gap << " avg_waiting=" << plan.avg_waiting
              << " waiting_violated=" << (plan.waiting_violated ? 1 : 0) << "\n";
    std::cout << "device_id,depth,ranks,predicted_t,budget_infeasible\n";
    for (const auto& [id, dp] : plan.devices) {
        std::cout << id << "," << dp.config.depth << ",";
        for (std::size_t i = 0; i < dp.config.ranks.size(); ++i) {
            if (i) std::cout << " ";
            std::cout << dp.config.ranks[i];
        }
        std::cout << "," << dp.predicted_completion << ","
                  << (dp.budget_infeasible ? 1 : 0) << "\n";
    }
    return 0;
}

int cmd_micro(const std::string& study, std::uint64_t seed, const std::string& out_path) {
    std::string csv;
    if (study == "position") csv = legend::micro_position_study(seed);
    else if (study == "depth") csv = legend::micro_depth_study(seed);
    else if (study == "rankdist") csv = legend::micro_rankdist_study(seed);
    else throw UsageError("micro study must be position|depth|rankdist");
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        write_file(out_path, csv);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LoRA-depth-adaptive federated fine-tuning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run a full experiment from a config file");
    run->add_option("config", config_path, "experiment config file")->required();

    std::string profile_path, depth_rule = "endpoint_normalized";
    int layers = 12, psi = 96, lambda = 1;
    double epsilon = 5.0, chat = 0.0, cost_c = 1.0, cost_b = 1.0;
    auto* plan = app.add_subcommand("plan", "One-shot LoRA configuration for a device profile");
    plan->add_option("profile", profile_path, "profile CSV: device_id,mu,beta,forward,compute_budget,comm_budget")
        ->required();
    plan->add_option("--layers", layers, "transformer layer count L");
    plan->add_option("--psi", psi, "total rank budget");
    plan->add_option("--lambda", lambda, "rank common difference");
    plan->add_option("--epsilon", epsilon, "waiting-time threshold");
    plan->add_option("--chat", chat, "fixed forward compute cost");
    plan->add_option("--cost-c", cost_c, "compute cost per rank unit");
    plan->add_option("--cost-b", cost_b, "comm cost per rank unit");
    plan->add_option("--depth-rule", depth_rule, "endpoint_normalized|paper_literal");

    std::string study, micro_out;
    std::uint64_t seed = 1;
    auto* micro = app.add_subcommand("micro", "Qualitative toy-scale study");
    micro->add_option("study", study, "position|depth|rankdist")->required();
    micro->add_option("--seed", seed, "rng seed");
    micro->add_option("--out", micro_out, "write CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (plan->parsed())
            return cmd_plan(profile_path, layers, psi, lambda, epsilon, chat, cost_c, cost_b,
                            depth_rule);
        if (micro->parsed()) return cmd_micro(study, seed, micro_out);
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const legend::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
