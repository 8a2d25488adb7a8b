#include "flockrl/harness.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "flockrl/config_io.hpp"
#include "flockrl/errors.hpp"
#include "flockrl/util.hpp"

namespace fs = std::filesystem;

namespace flockrl {

ExperimentConfig ExperimentConfig::with_scale(const std::string& scale) {
    ExperimentConfig cfg;
    cfg.scale = scale;
    if (scale == "paper") {
        cfg.world = WorldConfig{};  // L=36, n=3, m=5, T=100
        cfg.rewards = RewardConfig::from_map_side(cfg.world.L);
        cfg.train.episodes = 200000;
        cfg.pretrain.steps = 300000;
        cfg.demo_episodes = 3000;
        cfg.eval_episodes = 2500;
    } else if (scale == "desk") {
        cfg.world.L = 18.0;
        cfg.world.n = 2;
        cfg.world.m = 2;
        cfg.world.T_episode = 60;
        cfg.rewards = RewardConfig::from_map_side(cfg.world.L);
        cfg.train.episodes = 5000;
        cfg.pretrain.steps = 20000;
        cfg.demo_episodes = 500;
        cfg.eval_episodes = 200;
    } else {
        throw ConfigError("unknown scale preset: " + scale + " (expected desk|paper)");
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    world.validate();
    rewards.validate();
    train.validate();
    pretrain.validate();
    apf.validate();
    algo_from_string(algo);
    if (seeds.empty()) throw ConfigError("experiment config: seeds must be non-empty");
    if (eval_episodes < 1) throw ConfigError("experiment config: eval_episodes must be >= 1");
    if (demo_episodes < 1) throw ConfigError("experiment config: demo_episodes must be >= 1");
    if (snapshots < 1) throw ConfigError("experiment config: snapshots must be >= 1");
    if (!demo_file.empty() && !fs::exists(demo_file))
        throw ConfigError("experiment config: demo file does not exist: " + demo_file);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"scale", c.scale},
                       {"world", c.world},
                       {"rewards", c.rewards},
                       {"train", c.train},
                       {"pretrain", c.pretrain},
                       {"apf", c.apf},
                       {"algo", c.algo},
                       {"demo_file", c.demo_file},
                       {"demo_episodes", c.demo_episodes},
                       {"demo_seed", c.demo_seed},
                       {"seeds", c.seeds},
                       {"eval_episodes", c.eval_episodes},
                       {"snapshots", c.snapshots}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = ExperimentConfig::with_scale(j.value("scale", "desk"));
    if (j.contains("world")) j.at("world").get_to(c.world);
    if (j.contains("rewards")) j.at("rewards").get_to(c.rewards);
    if (j.contains("train")) j.at("train").get_to(c.train);
    if (j.contains("pretrain")) j.at("pretrain").get_to(c.pretrain);
    if (j.contains("apf")) j.at("apf").get_to(c.apf);
    c.algo = j.value("algo", c.algo);
    c.demo_file = j.value("demo_file", c.demo_file);
    c.demo_episodes = j.value("demo_episodes", c.demo_episodes);
    c.demo_seed = j.value("demo_seed", c.demo_seed);
    if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.snapshots = j.value("snapshots", c.snapshots);
}

EvalAggregate evaluate(const std::vector<AgentBundle>& agents, const WorldConfig& wc,
                       const RewardConfig& rc, int episodes, std::uint64_t seed,
                       std::vector<EpisodeMetricsRow>* rows_out) {
    EvalAggregate agg;
    agg.episodes = episodes;
    for (int e = 0; e < episodes; ++e) {
        const std::uint64_t env_seed = seed_combine(seed, "eval-env", static_cast<std::uint64_t>(e));
        const EpisodeMetricsRow row = rollout_greedy(agents, wc, rc, env_seed, e);
        agg.success_rate += row.success ? 1.0 : 0.0;
        agg.mean_return += row.episode_return;
        agg.mean_flock_distance += row.flock_distance;
        agg.mean_time_steps += row.time_steps;
        agg.mean_force_sum += row.force_sum;
        if (rows_out) rows_out->push_back(row);
    }
    const double inv = 1.0 / static_cast<double>(episodes);
    agg.success_rate *= inv;
    agg.mean_return *= inv;
    agg.mean_flock_distance *= inv;
    agg.mean_time_steps *= inv;
    agg.mean_force_sum *= inv;
    return agg;
}

void write_metrics_csv(const std::string& path, const std::vector<EpisodeMetricsRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorruptFileError("cannot write: " + path);
    out << EpisodeMetricsRow::csv_header() << '\n';
    for (const EpisodeMetricsRow& r : rows) out << r.csv_row() << '\n';
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

std::vector<EpisodeMetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFileError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw CorruptFileError("empty metrics file: " + path, 1);
    if (line != EpisodeMetricsRow::csv_header())
        throw CorruptFileError("unexpected metrics header in " + path, 1);
    std::vector<EpisodeMetricsRow> rows;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8) throw CorruptFileError("bad metrics row in " + path, line_no);
        EpisodeMetricsRow r;
        r.episode = std::stoi(f[0]);
        r.seed = std::stoull(f[1]);
        r.success = f[2] == "1";
        r.episode_return = std::stod(f[3]);
        r.flock_distance = std::stod(f[4]);
        r.time_steps = std::stoi(f[5]);
        r.force_sum = std::stod(f[6]);
        r.wall_ms = std::stod(f[7]);
        rows.push_back(r);
    }
    return rows;
}

namespace {

const char* kRoleNames[4] = {"actor", "critic", "actor_target", "critic_target"};

}  // namespace

void save_agents(const std::string& dir, const std::vector<AgentBundle>& agents) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const AgentBundle& ag = agents[i];
        const std::string base = dir + "/agent" + std::to_string(i) + "_";
        save_params(ag.actor, ag.actor_adam, base + "actor.flrl");
        save_params(ag.critic, ag.critic_adam, base + "critic.flrl");
        save_params(ag.actor_target, make_adam(ag.actor_target), base + "actor_target.flrl");
        save_params(ag.critic_target, make_adam(ag.critic_target), base + "critic_target.flrl");
    }
}

std::vector<AgentBundle> load_agents(const std::string& dir) {
    std::vector<AgentBundle> agents;
    for (std::size_t i = 0;; ++i) {
        const std::string base = dir + "/agent" + std::to_string(i) + "_";
        if (!fs::exists(base + "actor.flrl")) break;
        AgentBundle ag;
        load_params(ag.actor, ag.actor_adam, base + "actor.flrl");
        load_params(ag.critic, ag.critic_adam, base + "critic.flrl");
        AdamState ignored;
        load_params(ag.actor_target, ignored, base + "actor_target.flrl");
        load_params(ag.critic_target, ignored, base + "critic_target.flrl");
        agents.push_back(std::move(ag));
    }
    if (agents.empty())
        throw CorruptCheckpointError("no agent checkpoints under " + dir);
    return agents;
}

namespace {

constexpr char kResumeMagic[4] = {'F', 'L', 'R', 'S'};

void put_u64_raw(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_raw(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CorruptCheckpointError("resume state truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64_block(std::ostream& out, const double* p, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, p + i, 8);
        put_u64_raw(out, bits);
    }
}

void get_f64_block(std::istream& in, double* p, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t bits = get_u64_raw(in);
        std::memcpy(p + i, &bits, 8);
    }
}

}  // namespace

void save_resume_state(const std::string& path, std::uint64_t episodes_done,
                       const std::vector<AgentBundle>& agents, const ReplayBuffer& replay) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CorruptCheckpointError("cannot write resume state: " + tmp);
        out.write(kResumeMagic, 4);
        put_u64_raw(out, 1);  // version
        put_u64_raw(out, episodes_done);
        put_u64_raw(out, agents.size());
        for (const AgentBundle& ag : agents) {
            write_params(ag.actor, ag.actor_adam, out);
            write_params(ag.critic, ag.critic_adam, out);
            write_params(ag.actor_target, make_adam(ag.actor_target), out);
            write_params(ag.critic_target, make_adam(ag.critic_target), out);
        }
        put_u64_raw(out, replay.capacity());
        put_u64_raw(out, replay.size());
        put_u64_raw(out, replay.ring_cursor());
        const int n = replay.empty() ? 0 : replay.num_agents();
        const int olen = replay.empty() ? 0 : replay.obs_len();
        put_u64_raw(out, static_cast<std::uint64_t>(n));
        put_u64_raw(out, static_cast<std::uint64_t>(olen));
        for (std::size_t s = 0; s < replay.size(); ++s) {
            const Transition& t = replay.raw_at(s);
            for (int i = 0; i < n; ++i) put_f64_block(out, t.obs[static_cast<std::size_t>(i)].data(), static_cast<std::size_t>(olen));
            for (int i = 0; i < n; ++i) {
                put_f64_block(out, &t.act[static_cast<std::size_t>(i)].fx, 1);
                put_f64_block(out, &t.act[static_cast<std::size_t>(i)].fy, 1);
            }
            put_f64_block(out, t.rew.data(), static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) put_f64_block(out, t.next_obs[static_cast<std::size_t>(i)].data(), static_cast<std::size_t>(olen));
            out.put(t.done ? 1 : 0);
        }
        if (!out) throw CorruptCheckpointError("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

ResumeState load_resume_state(const std::string& path, ReplayBuffer& replay_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpointError("cannot open resume state: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kResumeMagic, 4) != 0)
        throw CorruptCheckpointError("bad resume state magic");
    if (get_u64_raw(in) != 1) throw CorruptCheckpointError("unsupported resume state version");

    ResumeState st;
    st.episodes_done = get_u64_raw(in);
    const std::uint64_t n_agents = get_u64_raw(in);
    if (n_agents == 0 || n_agents > 64) throw CorruptCheckpointError("implausible agent count");
    for (std::uint64_t i = 0; i < n_agents; ++i) {
        AgentBundle ag;
        AdamState ignored;
        read_params(ag.actor, ag.actor_adam, in);
        read_params(ag.critic, ag.critic_adam, in);
        read_params(ag.actor_target, ignored, in);
        read_params(ag.critic_target, ignored, in);
        st.agents.push_back(std::move(ag));
    }

    const std::uint64_t capacity = get_u64_raw(in);
    const std::uint64_t size = get_u64_raw(in);
    const std::uint64_t cursor = get_u64_raw(in);
    const int n = static_cast<int>(get_u64_raw(in));
    const int olen = static_cast<int>(get_u64_raw(in));
    if (capacity != replay_out.capacity())
        throw CorruptCheckpointError("resume state replay capacity mismatch");
    std::vector<Transition> storage;
    storage.reserve(size);
    for (std::uint64_t s = 0; s < size; ++s) {
        Transition t;
        t.obs.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(olen)));
        for (int i = 0; i < n; ++i) get_f64_block(in, t.obs[static_cast<std::size_t>(i)].data(), static_cast<std::size_t>(olen));
        t.act.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            get_f64_block(in, &t.act[static_cast<std::size_t>(i)].fx, 1);
            get_f64_block(in, &t.act[static_cast<std::size_t>(i)].fy, 1);
        }
        t.rew.resize(static_cast<std::size_t>(n));
        get_f64_block(in, t.rew.data(), static_cast<std::size_t>(n));
        t.next_obs.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(olen)));
        for (int i = 0; i < n; ++i) get_f64_block(in, t.next_obs[static_cast<std::size_t>(i)].data(), static_cast<std::size_t>(olen));
        const int done = in.get();
        if (done != 0 && done != 1) throw CorruptCheckpointError("resume state truncated");
        t.done = done == 1;
        storage.push_back(std::move(t));
    }
    replay_out.restore_ring(std::move(storage), cursor);
    return st;
}

// --- run_experiment ---

namespace {

std::uint64_t hash_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CorruptFileError("cannot hash: " + p.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const nlohmann::json j = cfg;
    return fnv1a64(j.dump());
}

void write_manifest_file(const std::string& run_dir, std::uint64_t cfg_hash, bool complete) {
    nlohmann::json files = nlohmann::json::object();
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), run_dir).generic_string();
        if (rel == "manifest.json") continue;
        files[rel] = {{"fnv1a64", hex64(hash_file(entry.path()))},
                      {"bytes", fs::file_size(entry.path())}};
    }
    nlohmann::json j{{"version", 1},
                     {"config_fnv1a64", hex64(cfg_hash)},
                     {"complete", complete},
                     {"files", files}};
    std::ofstream out(run_dir + "/manifest.json", std::ios::binary);
    out << j.dump(2) << '\n';
}

struct SeedRunPaths {
    fs::path dir;
    fs::path training_csv;
    fs::path pretrain_csv;
    fs::path eval_csv;
    fs::path resume_bin;
    fs::path ckpt_pretrained;
    fs::path ckpt_final;
};

SeedRunPaths seed_paths(const std::string& out_dir, std::uint64_t seed) {
    SeedRunPaths p;
    p.dir = fs::path(out_dir) / ("seed_" + std::to_string(seed));
    p.training_csv = p.dir / "training.csv";
    p.pretrain_csv = p.dir / "pretrain_report.csv";
    p.eval_csv = p.dir / "eval.csv";
    p.resume_bin = p.dir / "resume_state.bin";
    p.ckpt_pretrained = p.dir / "checkpoints" / "pretrained";
    p.ckpt_final = p.dir / "checkpoints" / "final";
    return p;
}

struct EvalSnapshotRow {
    int episode = 0;
    EvalAggregate agg;
};

const char* kEvalHeader =
    "episode,success_rate,return,flock_distance,time_steps,force_sum,eval_episodes";

std::string eval_row_csv(const EvalSnapshotRow& r) {
    return std::to_string(r.episode) + ',' + fmt_double(r.agg.success_rate) + ',' +
           fmt_double(r.agg.mean_return) + ',' + fmt_double(r.agg.mean_flock_distance) + ',' +
           fmt_double(r.agg.mean_time_steps) + ',' + fmt_double(r.agg.mean_force_sum) + ',' +
           std::to_string(r.agg.episodes);
}

void write_eval_csv(const fs::path& path, const std::vector<EvalSnapshotRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    out << kEvalHeader << '\n';
    for (const auto& r : rows) out << eval_row_csv(r) << '\n';
}

std::vector<EvalSnapshotRow> read_eval_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFileError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kEvalHeader)
        throw CorruptFileError("unexpected eval header in " + path.string(), 1);
    std::vector<EvalSnapshotRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7) throw CorruptFileError("bad eval row in " + path.string());
        EvalSnapshotRow r;
        r.episode = std::stoi(f[0]);
        r.agg.success_rate = std::stod(f[1]);
        r.agg.mean_return = std::stod(f[2]);
        r.agg.mean_flock_distance = std::stod(f[3]);
        r.agg.mean_time_steps = std::stod(f[4]);
        r.agg.mean_force_sum = std::stod(f[5]);
        r.agg.episodes = std::stoi(f[6]);
        rows.push_back(r);
    }
    return rows;
}

// One seed's full pipeline. Runs on a worker thread; owns its directory.
void run_one_seed(const ExperimentConfig& cfg, const std::string& out_dir,
                  const std::string& demo_path, std::uint64_t seed, bool resume) {
    const Algo algo = algo_from_string(cfg.algo);
    const SeedRunPaths paths = seed_paths(out_dir, seed);
    fs::create_directories(paths.dir);

    ReplayBuffer replay(cfg.train.replay_capacity);
    std::optional<ReplayBuffer> demos;
    if (algo_needs_demos(algo)) demos.emplace(load_demos(demo_path));

    std::vector<AgentBundle> agents;
    int start_episode = 0;
    std::vector<EpisodeMetricsRow> training_rows;
    std::vector<EvalSnapshotRow> eval_rows;

    if (resume && fs::exists(paths.resume_bin)) {
        const ResumeState st = load_resume_state(paths.resume_bin.string(), replay);
        agents = st.agents;
        start_episode = static_cast<int>(st.episodes_done);
        if (fs::exists(paths.training_csv)) {
            training_rows = read_metrics_csv(paths.training_csv.string());
            if (static_cast<int>(training_rows.size()) > start_episode)
                training_rows.resize(static_cast<std::size_t>(start_episode));
        }
        if (fs::exists(paths.eval_csv)) {
            eval_rows = read_eval_csv(paths.eval_csv);
            while (!eval_rows.empty() && eval_rows.back().episode > start_episode)
                eval_rows.pop_back();
        }
    } else {
        agents = make_agents(cfg.world.n, cfg.world.observation_size(),
                             seed_combine(seed, "init"), cfg.train);
    }
    if (start_episode >= cfg.train.episodes && cfg.train.episodes > 0) return;  // seed done

    const int interval = std::max(1, cfg.train.episodes / cfg.snapshots);
    const std::uint64_t eval_seed = seed_combine(seed, "eval");

    std::vector<PretrainStepReport> pretrain_rows;
    AlgoRunHooks hooks;
    hooks.start_episode = start_episode;
    hooks.pretrain_report = [&](const PretrainStepReport& r) { pretrain_rows.push_back(r); };
    hooks.after_pretrain = [&](const std::vector<AgentBundle>& ags) {
        save_agents(paths.ckpt_pretrained.string(), ags);
        if (!pretrain_rows.empty()) {
            std::ofstream out(paths.pretrain_csv, std::ios::binary);
            out << PretrainStepReport::csv_header() << '\n';
            for (const auto& r : pretrain_rows) out << r.csv_row() << '\n';
        }
        EvalSnapshotRow row;
        row.episode = 0;
        row.agg = evaluate(ags, cfg.world, cfg.rewards, cfg.eval_episodes, eval_seed);
        eval_rows.push_back(row);
        write_eval_csv(paths.eval_csv, eval_rows);
    };
    hooks.on_metrics = [&](const EpisodeMetricsRow& r) { training_rows.push_back(r); };
    hooks.after_episode = [&](int done) {
        if (done % interval != 0 && done != cfg.train.episodes) return;
        EvalSnapshotRow row;
        row.episode = done;
        row.agg = evaluate(agents, cfg.world, cfg.rewards, cfg.eval_episodes, eval_seed);
        eval_rows.push_back(row);
        write_eval_csv(paths.eval_csv, eval_rows);
        write_metrics_csv(paths.training_csv.string(), training_rows);
        save_resume_state(paths.resume_bin.string(), static_cast<std::uint64_t>(done), agents,
                          replay);
    };

    run_baseline(algo, cfg.world, cfg.rewards, cfg.train, cfg.pretrain, agents, replay,
                 demos ? &*demos : nullptr, seed, hooks);

    write_metrics_csv(paths.training_csv.string(), training_rows);
    save_agents(paths.ckpt_final.string(), agents);
    if (!eval_rows.empty()) write_eval_csv(paths.eval_csv, eval_rows);
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, bool resume,
                    int jobs) {
    cfg.validate();
    const std::uint64_t cfg_hash = config_hash(cfg);
    const fs::path manifest_path = fs::path(out_dir) / "manifest.json";

    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        nlohmann::json m;
        try {
            in >> m;
        } catch (const nlohmann::json::exception&) {
            throw CorruptFileError("unreadable manifest in " + out_dir);
        }
        if (m.value("config_fnv1a64", "") != hex64(cfg_hash))
            throw ConfigError("run directory " + out_dir + " holds a different configuration");
        if (m.value("complete", false)) return;  // finished run: no-op
        if (!resume)
            throw ConfigError("partial run in " + out_dir + "; rerun with --resume or a fresh --out");
    } else if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        if (!resume)
            throw ConfigError("output directory " + out_dir + " is not empty and has no manifest");
    }

    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "config.json", std::ios::binary);
        const nlohmann::json j = cfg;
        out << j.dump(2) << '\n';
    }

    // demonstrations: shared by all seeds, generated once
    std::string demo_path = cfg.demo_file;
    if (algo_needs_demos(algo_from_string(cfg.algo)) && demo_path.empty()) {
        demo_path = (fs::path(out_dir) / "demos.jsonl").string();
        if (!fs::exists(demo_path)) {
            const DemoGenStats stats = generate_demos(cfg.world, cfg.rewards, cfg.apf,
                                                      cfg.demo_episodes, cfg.demo_seed, demo_path);
            nlohmann::json meta;
            load_demos(demo_path, &meta);
            std::ofstream out(fs::path(out_dir) / "demo_meta.json", std::ios::binary);
            out << meta.dump(2) << '\n';
            (void)stats;
        }
    }

    // write an incomplete manifest first so interrupted runs are detectable
    write_manifest_file(out_dir, cfg_hash, false);

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cfg.seeds.size())));
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::size_t next_seed = 0;
    std::mutex mu;
    auto worker = [&]() {
        while (true) {
            std::size_t idx;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next_seed >= cfg.seeds.size()) return;
                idx = next_seed++;
            }
            try {
                run_one_seed(cfg, out_dir, demo_path, cfg.seeds[idx], resume);
            } catch (...) {
                errors[idx] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    write_manifest_file(out_dir, cfg_hash, true);
}

bool verify_manifest(const std::string& run_dir, std::string* first_mismatch) {
    std::ifstream in(fs::path(run_dir) / "manifest.json");
    if (!in) throw CorruptFileError("no manifest in " + run_dir);
    nlohmann::json m;
    in >> m;
    for (const auto& [rel, info] : m.at("files").items()) {
        const fs::path p = fs::path(run_dir) / rel;
        if (!fs::exists(p)) {
            if (first_mismatch) *first_mismatch = rel + " (missing)";
            return false;
        }
        if (hex64(hash_file(p)) != info.at("fnv1a64").get<std::string>()) {
            if (first_mismatch) *first_mismatch = rel + " (hash mismatch)";
            return false;
        }
    }
    return true;
}

// --- compare ---

namespace {

struct LoadedRun {
    std::string dir;
    std::string algo;
    nlohmann::json world;
    nlohmann::json rewards;
    int episodes = 0;
    std::vector<std::uint64_t> seeds;
    // per seed
    std::vector<std::vector<EpisodeMetricsRow>> training;
    std::vector<std::vector<EvalSnapshotRow>> evals;
};

LoadedRun load_run(const std::string& dir) {
    LoadedRun run;
    run.dir = dir;
    std::ifstream in(fs::path(dir) / "config.json");
    if (!in) throw ComparisonRefused("no config.json in " + dir);
    nlohmann::json j;
    in >> j;
    run.algo = j.value("algo", "?");
    run.world = j.value("world", nlohmann::json::object());
    run.rewards = j.value("rewards", nlohmann::json::object());
    run.episodes = j.at("train").value("episodes", 0);
    run.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    for (const std::uint64_t s : run.seeds) {
        const SeedRunPaths p = seed_paths(dir, s);
        if (!fs::exists(p.training_csv) || !fs::exists(p.eval_csv))
            throw ComparisonRefused("run " + dir + " seed " + std::to_string(s) +
                                    " is missing metrics files");
        run.training.push_back(read_metrics_csv(p.training_csv.string()));
        run.evals.push_back(read_eval_csv(p.eval_csv));
    }
    return run;
}

// first episode index (1-based count) whose trailing moving average of
// training success reaches the threshold; -1 if never
int episodes_to_threshold_ma(const std::vector<EpisodeMetricsRow>& rows, int window,
                             double threshold) {
    double acc = 0.0;
    std::vector<double> succ(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) succ[i] = rows[i].success ? 1.0 : 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        acc += succ[i];
        if (i >= static_cast<std::size_t>(window)) acc -= succ[i - static_cast<std::size_t>(window)];
        const std::size_t cur_window = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
        if (acc / static_cast<double>(cur_window) >= threshold) return static_cast<int>(i + 1);
    }
    return -1;
}

int episodes_to_threshold_eval(const std::vector<EvalSnapshotRow>& rows, double threshold) {
    for (const auto& r : rows)
        if (r.agg.success_rate >= threshold) return r.episode;
    return -1;
}

}  // namespace

void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                  const CompareOptions& opts) {
    if (run_dirs.size() < 2)
        throw ComparisonRefused("compare needs at least two run directories");
    std::vector<LoadedRun> runs;
    for (const std::string& d : run_dirs) runs.push_back(load_run(d));
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].world != runs[0].world || runs[i].rewards != runs[0].rewards)
            throw ComparisonRefused("environment configs differ between " + runs[0].dir + " and " +
                                    runs[i].dir);
    }

    fs::create_directories(out_dir);

    {
        std::ofstream out(fs::path(out_dir) / "summary.csv", std::ios::binary);
        out << "run,algo,seed,success_rate,reward,flock_distance,time_steps,force,"
               "episodes_to_threshold_ma,episodes_to_threshold_eval\n";
        for (const LoadedRun& run : runs) {
            for (std::size_t k = 0; k < run.seeds.size(); ++k) {
                const EvalSnapshotRow& fin = run.evals[k].back();
                out << run.dir << ',' << run.algo << ',' << run.seeds[k] << ','
                    << fmt_double(fin.agg.success_rate) << ',' << fmt_double(fin.agg.mean_return)
                    << ',' << fmt_double(fin.agg.mean_flock_distance) << ','
                    << fmt_double(fin.agg.mean_time_steps) << ','
                    << fmt_double(fin.agg.mean_force_sum) << ','
                    << episodes_to_threshold_ma(run.training[k], opts.window, opts.threshold)
                    << ',' << episodes_to_threshold_eval(run.evals[k], opts.threshold) << '\n';
            }
        }
    }

    {
        std::ofstream out(fs::path(out_dir) / "snapshots.csv", std::ios::binary);
        out << "run,algo,seed,episode,success_rate,return,flock_distance,time_steps,force_sum\n";
        for (const LoadedRun& run : runs)
            for (std::size_t k = 0; k < run.seeds.size(); ++k)
                for (const EvalSnapshotRow& r : run.evals[k])
                    out << run.dir << ',' << run.algo << ',' << run.seeds[k] << ',' << r.episode
                        << ',' << fmt_double(r.agg.success_rate) << ','
                        << fmt_double(r.agg.mean_return) << ','
                        << fmt_double(r.agg.mean_flock_distance) << ','
                        << fmt_double(r.agg.mean_time_steps) << ','
                        << fmt_double(r.agg.mean_force_sum) << '\n';
    }

    {
        // long-format smoothed curves for plotting
        std::ofstream out(fs::path(out_dir) / "curves.csv", std::ios::binary);
        out << "run,algo,seed,episode,metric,value\n";
        for (const LoadedRun& run : runs) {
            for (std::size_t k = 0; k < run.seeds.size(); ++k) {
                const auto& rows = run.training[k];
                double acc_s = 0.0, acc_r = 0.0;
                std::vector<double> succ(rows.size()), ret(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    succ[i] = rows[i].success ? 1.0 : 0.0;
                    ret[i] = rows[i].episode_return;
                }
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    acc_s += succ[i];
                    acc_r += ret[i];
                    if (i >= static_cast<std::size_t>(opts.window)) {
                        acc_s -= succ[i - static_cast<std::size_t>(opts.window)];
                        acc_r -= ret[i - static_cast<std::size_t>(opts.window)];
                    }
                    const double w =
                        static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(opts.window)));
                    out << run.dir << ',' << run.algo << ',' << run.seeds[k] << ',' << (i + 1)
                        << ",success_ma," << fmt_double(acc_s / w) << '\n';
                    out << run.dir << ',' << run.algo << ',' << run.seeds[k] << ',' << (i + 1)
                        << ",return_ma," << fmt_double(acc_r / w) << '\n';
                }
            }
        }
    }
}

}  // namespace flockrl
