#include "dvhn/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "dvhn/bench.hpp"
#include "dvhn/checkpoint.hpp"
#include "dvhn/dataset.hpp"
#include "dvhn/errors.hpp"
#include "dvhn/hamming.hpp"
#include "dvhn/metrics.hpp"
#include "dvhn/selftest.hpp"
#include "dvhn/solver.hpp"

namespace dvhn {

namespace fs = std::filesystem;

namespace {

// Short flag spellings for config keys; every key is also accepted as --<key>.
const std::map<std::string, std::string> kFlagAliases = {
    {"bits_K", "--bits"},         {"margin_alpha", "--alpha"},     {"lr", "--lr"},
    {"mu", "--mu"},               {"nu", "--nu"},                  {"eta", "--eta"},
    {"lambda", "--lambda"},       {"sigma", "--sigma"},            {"inner_iters", "--inner-iters"},
    {"outer_iters_T", "--outer-iters"}, {"P", "--p"},              {"K1", "--k1"},
    {"seed", "--seed"},
};

class UsageError : public Error {
public:
    using Error::Error;
};

void require_file(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("input file not found: " + path.string());
}

EmbeddingSet load_input(const fs::path& path, const std::string& format) {
    require_file(path);
    if (format == "csv") return load_embeddings_csv(path);
    return load_embeddings(path);
}

std::string history_line(const HistoryEntry& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g %.17g", e.t, e.losses.triplet,
                  e.losses.identity, e.losses.quant_coupling, e.recon_after_b, e.losses.total);
    return buf;
}

struct TrainArgs {
    std::string config;
    std::string input;
    std::string out;
    std::string history;
    std::string codes_out;
    std::string format = "emb1";
    std::map<std::string, std::string> overrides;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config);
        cfg = load_config(a.config);
    }
    for (const auto& [key, value] : a.overrides) set_config_value(cfg, key, value);
    if (a.overrides.find("threads") == a.overrides.end()) cfg.threads = scan_threads();
    cfg.validate();

    const auto data = load_input(a.input, a.format);
    const auto result = train(data, cfg, [&](const HistoryEntry& e) {
        if (!a.quiet) out << "outer " << history_line(e) << '\n';
    });
    save_checkpoint({result.params, result.classifier}, a.out);
    std::ofstream hist(a.history, std::ios::trunc);
    if (!hist) throw IoError("cannot open '" + a.history + "' for writing");
    for (const auto& e : result.history) hist << history_line(e) << '\n';
    hist.flush();
    if (!hist) throw IoError("write to '" + a.history + "' failed");
    if (!a.codes_out.empty()) {
        std::vector<std::uint32_t> labels(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) labels[i] = data.raw_label(i);
        save_codes(pack_codes(result.codes.transpose(), std::move(labels)), a.codes_out);
    }
    out << "trained " << result.history.size() << " outer iterations"
        << (result.converged ? " (converged)" : "") << "; checkpoint " << a.out << '\n';
    return kExitOk;
}

int cmd_encode(const std::string& checkpoint, const std::string& input,
               const std::string& format, const std::string& output, std::ostream& out) {
    require_file(checkpoint);
    const auto cp = load_checkpoint(checkpoint);
    const auto data = load_input(input, format);
    const auto dims = cp.params.dims();
    if (static_cast<int>(data.dim()) != dims.input_dim) {
        throw UsageError("embedding dimension M=" + std::to_string(data.dim()) +
                         " does not match checkpoint input dimension M=" +
                         std::to_string(dims.input_dim));
    }
    const auto codes = encode_set(cp.params, data, scan_threads());
    save_codes(codes, output);
    out << "encoded " << codes.num_items << " items at K=" << codes.bits << " into " << output
        << '\n';
    return kExitOk;
}

std::pair<CodeMatrix, CodeMatrix> load_pair(const std::string& gallery_path,
                                            const std::string& query_path) {
    require_file(gallery_path);
    require_file(query_path);
    auto gallery = load_codes(gallery_path);
    auto queries = load_codes(query_path);
    if (gallery.bits != queries.bits) {
        throw UsageError("code length mismatch: gallery K=" + std::to_string(gallery.bits) +
                         ", query K=" + std::to_string(queries.bits));
    }
    return {std::move(gallery), std::move(queries)};
}

int cmd_query(const std::string& gallery_path, const std::string& query_path, std::size_t top_k,
              std::ostream& out) {
    const auto [gallery, queries] = load_pair(gallery_path, query_path);
    for (std::size_t q = 0; q < queries.num_items; ++q) {
        const auto ranked = rank_gallery(queries.item(q), gallery, top_k);
        out << q << ':';
        for (std::size_t r = 0; r < ranked.indices.size(); ++r) {
            out << ' ' << ranked.indices[r] << '(' << static_cast<std::uint64_t>(ranked.distances[r])
                << ')';
        }
        out << '\n';
    }
    return kExitOk;
}

int cmd_eval(const std::string& gallery_path, const std::string& query_path,
             const EvalOptions& options, bool json, std::ostream& out) {
    const auto [gallery, queries] = load_pair(gallery_path, query_path);
    const auto report = evaluate(queries, gallery, options);
    out << (json ? format_report_json(report) + "\n" : format_report_text(report));
    return kExitOk;
}

int cmd_selftest(const SelftestOptions& options, std::ostream& out) {
    const auto groups = run_selftest(options);
    std::vector<std::string> failed;
    for (const auto& g : groups) {
        out << (g.passed ? "PASS " : "FAIL ") << g.name;
        if (!g.detail.empty()) out << "  (" << g.detail << ')';
        out << '\n';
        if (!g.passed) failed.push_back(g.name);
    }
    if (failed.empty()) {
        out << "selftest: all groups passed\n";
        return kExitOk;
    }
    out << "selftest: failed groups:";
    for (const auto& f : failed) out << ' ' << f;
    out << '\n';
    return kExitFailure;
}

}  // namespace

int scan_threads() {
    int threads = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("DVHN_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap >= 1) threads = std::min<long>(threads, cap);
    }
    return threads;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learned binary codes for re-identification: train, encode, search, evaluate", "dvhn"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic labeled embedding set");
    int ids = 32;
    int per_id = 20;
    int dim = 64;
    double spread = 0.15;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    std::string query_out;
    std::string gallery_out;
    int query_per_id = 2;
    int gallery_per_id = 8;
    synth->add_option("--ids", ids, "Number of identities");
    synth->add_option("--per-id", per_id, "Training rows per identity");
    synth->add_option("--dim", dim, "Embedding dimension");
    synth->add_option("--spread", spread, "Per-coordinate standard deviation around each center");
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out", synth_out, "Training set output (EMB1)")->required();
    synth->add_option("--query-out", query_out, "Held-out query set output (EMB1)");
    synth->add_option("--gallery-out", gallery_out, "Held-out gallery set output (EMB1)");
    synth->add_option("--query-per-id", query_per_id);
    synth->add_option("--gallery-per-id", gallery_per_id);

    // train
    auto* train_cmd = app.add_subcommand("train", "Run the alternating optimization");
    TrainArgs targs;
    train_cmd->add_option("--config", targs.config, "Flat key = value config file");
    train_cmd->add_option("--input", targs.input, "Training embeddings")->required();
    train_cmd->add_option("--out", targs.out, "Checkpoint output (DVHM)")->required();
    train_cmd->add_option("--history", targs.history, "Loss history output")->required();
    train_cmd->add_option("--codes-out", targs.codes_out, "Learned training codes B (DVHC)");
    train_cmd->add_option("--format", targs.format)->check(CLI::IsMember({"emb1", "csv"}));
    train_cmd->add_flag("--quiet", targs.quiet, "Do not print per-iteration progress");
    std::map<std::string, std::string> raw_overrides;
    for (const auto& key : config_keys()) {
        std::string names = "--" + key;
        if (auto it = kFlagAliases.find(key); it != kFlagAliases.end() && it->second != names) {
            names = it->second + "," + names;
        }
        train_cmd->add_option(names, raw_overrides[key], "Overrides config key " + key);
    }

    // encode
    auto* encode_cmd = app.add_subcommand("encode", "Encode embeddings into packed codes");
    std::string enc_checkpoint;
    std::string enc_input;
    std::string enc_out;
    std::string enc_format = "emb1";
    encode_cmd->add_option("--checkpoint", enc_checkpoint)->required();
    encode_cmd->add_option("--input", enc_input)->required();
    encode_cmd->add_option("--out", enc_out, "Code output (DVHC)")->required();
    encode_cmd->add_option("--format", enc_format)->check(CLI::IsMember({"emb1", "csv"}));

    // query
    auto* query_cmd = app.add_subcommand("query", "Rank a gallery for each query code");
    std::string q_gallery;
    std::string q_query;
    std::size_t top_k = 10;
    query_cmd->add_option("--gallery", q_gallery)->required();
    query_cmd->add_option("--query", q_query)->required();
    query_cmd->add_option("--top-k", top_k)->check(CLI::PositiveNumber);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "CMC and mAP of query codes against a gallery");
    std::string e_gallery;
    std::string e_query;
    EvalOptions eopts;
    bool e_json = false;
    bool camera_filter = false;
    eval_cmd->add_option("--gallery", e_gallery)->required();
    eval_cmd->add_option("--query", e_query)->required();
    eval_cmd->add_option("--max-rank", eopts.max_rank)->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--exclude-self", eopts.exclude_self,
                       "Query i and gallery item i are the same item");
    eval_cmd->add_flag("--json", e_json);
    eval_cmd->add_flag("--camera-filter", camera_filter, "Reserved");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Packed Hamming vs float64 Euclidean scans");
    BenchConfig bcfg;
    bool b_json = false;
    bench_cmd->add_option("--bits", bcfg.bits);
    bench_cmd->add_option("--gallery-size", bcfg.gallery_size);
    bench_cmd->add_option("--query-size", bcfg.query_size);
    bench_cmd->add_option("--seed", bcfg.seed);
    bench_cmd->add_option("--repeats", bcfg.repeats);
    bench_cmd->add_option("--threads", bcfg.threads, "Also time a parallel scan (capped by DVHN_THREADS)");
    bench_cmd->add_flag("--json", b_json);

    // selftest
    auto* selftest_cmd = app.add_subcommand("selftest", "Run the embedded verification battery");
    SelftestOptions sopts;
    selftest_cmd->add_option("--inject-fault", sopts.inject_fault)->group("");

    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*synth) {
            if (query_out.empty() != gallery_out.empty()) {
                throw UsageError("--query-out and --gallery-out must be given together");
            }
            if (query_out.empty()) {
                save_embeddings(generate_synthetic(ids, per_id, dim, spread, synth_seed), synth_out);
            } else {
                const auto splits = generate_synthetic_splits(ids, per_id, query_per_id,
                                                              gallery_per_id, dim, spread, synth_seed);
                save_embeddings(splits.train, synth_out);
                save_embeddings(splits.query, query_out);
                save_embeddings(splits.gallery, gallery_out);
            }
            return kExitOk;
        }
        if (*train_cmd) {
            for (const auto& key : config_keys()) {
                std::string name = "--" + key;
                if (train_cmd->get_option(name)->count() > 0) {
                    targs.overrides[key] = raw_overrides[key];
                }
            }
            return cmd_train(targs, out);
        }
        if (*encode_cmd) return cmd_encode(enc_checkpoint, enc_input, enc_format, enc_out, out);
        if (*query_cmd) return cmd_query(q_gallery, q_query, top_k, out);
        if (*eval_cmd) {
            if (camera_filter) {
                throw UsageError("--camera-filter is reserved: code files carry no camera ids");
            }
            eopts.threads = scan_threads();
            return cmd_eval(e_gallery, e_query, eopts, e_json, out);
        }
        if (*bench_cmd) {
            bcfg.threads = std::min(bcfg.threads, scan_threads());
            const auto report = run_bench(bcfg);
            out << (b_json ? format_bench_json(report) + "\n" : format_bench_text(report));
            return report.orderings_match ? kExitOk : kExitFailure;
        }
        if (*selftest_cmd) return cmd_selftest(sopts, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace dvhn
