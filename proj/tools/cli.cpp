#include "semtool/cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "semtool/config.hpp"
#include "semtool/errors.hpp"
#include "semtool/evalkit.hpp"
#include "semtool/gateway.hpp"
#include "semtool/index.hpp"
#include "semtool/pipeline.hpp"

namespace semtool {

namespace {

struct Options {
    std::string config_path;
    std::string provider;  // "", "reference", "remote"
    std::string tokenizer;

    std::string out_path;
    std::string index_path;
    std::string dataset_path;
    std::string query;
    std::vector<std::int64_t> ks;
    std::optional<double> threshold;
    std::string format = "md";
    bool no_timing = false;
    std::optional<int> port;
};

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::int64_t build_timestamp() {
    // SOURCE_DATE_EPOCH pins the stamp so repeated builds are byte-identical.
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        char* end = nullptr;
        const long long secs = std::strtoll(epoch, &end, 10);
        if (*end != '\0' || secs < 0) throw UsageError("SOURCE_DATE_EPOCH must be a non-negative integer");
        return static_cast<std::int64_t>(secs) * 1000;
    }
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

GatewayConfig load_effective_config(const Options& opt) {
    if (opt.config_path.empty()) throw UsageError("--config is required for this command");
    auto config = load_config(opt.config_path);
    if (opt.provider == "reference") {
        if (config.provider.kind != ProviderKind::ReferenceLocal) config.provider = ProviderSpec{};
    } else if (opt.provider == "remote") {
        if (config.provider.kind != ProviderKind::RemoteHttp) {
            throw UsageError("--provider remote needs a remote-http provider section in the config");
        }
    }
    if (!opt.tokenizer.empty()) config.tokenizer = TokenizerSpec::parse(opt.tokenizer);
    return config;
}

// Embedder for querying an existing index. Without a config the reference
// provider is rebuilt at the index's dimension.
std::unique_ptr<Embedder> query_embedder(const Options& opt, const IndexSnapshot& snap) {
    if (!opt.config_path.empty()) return make_embedder(load_effective_config(opt).provider);
    if (opt.provider == "remote") throw UsageError("--provider remote needs --config");
    ProviderSpec spec;
    spec.dimension = snap.dimension;
    return make_embedder(spec);
}

int cmd_index(const Options& opt, std::ostream& out) {
    const auto config = load_effective_config(opt);
    if (config.endpoints.empty()) throw UsageError("config lists no servers");
    const auto embedder = make_embedder(config.provider);
    const auto built = build_from_config(config, *embedder, build_timestamp());
    for (const auto& d : built.catalog.diagnostics) {
        out << "warning: " << d.server_id << ": " << d.message << "\n";
    }
    persist_snapshot(built.snapshot, opt.out_path);

    std::map<std::string, size_t> per_server;
    for (const auto& e : built.snapshot.entries) ++per_server[e.tool_key.server_id];
    out << "indexed " << built.snapshot.entries.size() << " tools from " << per_server.size()
        << " server(s) -> " << opt.out_path << "\n";
    for (const auto& [server, count] : per_server) out << "  " << server << ": " << count << "\n";
    out << "baseline tokens: " << built.snapshot.baseline_tokens() << " (" << built.snapshot.tokenizer_id << ")\n";
    out << "catalog_hash: " << built.snapshot.catalog_hash << "\n";
    return kExitOk;
}

int cmd_search(const Options& opt, std::ostream& out) {
    const auto snap = load_snapshot(opt.index_path);
    const auto embedder = query_embedder(opt, snap);
    const std::int64_t k = opt.ks.empty() ? 3 : opt.ks.front();
    const auto sel = select_tools(snap, *embedder, opt.query, k, opt.threshold);

    if (sel.fallback_applied) out << "fallback applied: no tool met the threshold, showing top " << k << "\n";
    out << "rank\ttool\tscore\ttokens\n";
    for (size_t i = 0; i < sel.ranked.size(); ++i) {
        const auto& r = sel.ranked[i];
        out << (i + 1) << "\t" << r.tool_key.qualified() << "\t" << fixed(r.score, 4) << "\t"
            << snap.find(r.tool_key)->schema_token_count << "\n";
    }
    out << "token reduction: " << fixed(sel.trr * 100.0, 1) << "% (" << sel.selected_tokens << " of "
        << sel.baseline_tokens << " tokens)\n";
    return kExitOk;
}

std::string metrics_path_for(const std::string& report_path) {
    std::filesystem::path p(report_path);
    p.replace_extension(".metrics.json");
    return p.string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path);
    f << content;
    if (!f.flush()) throw Error("cannot write " + path);
}

int cmd_eval(const Options& opt, std::ostream& out) {
    const auto format = parse_report_format(opt.format);
    const auto snap = load_snapshot(opt.index_path);
    const auto dataset = load_dataset(opt.dataset_path, &snap);
    const auto embedder = query_embedder(opt, snap);
    const auto ks = opt.ks.empty() ? kDefaultSweep : opt.ks;
    const auto report = evaluate(snap, *embedder, dataset, ks, opt.threshold);

    RenderOptions render;
    render.include_timing = !opt.no_timing;
    const auto text = render_report(report, format, render);
    const auto metrics = report_to_json(report, render).dump(2) + "\n";
    if (opt.out_path.empty()) {
        out << text;
        return kExitOk;
    }
    write_file(opt.out_path, text);
    const auto metrics_path = metrics_path_for(opt.out_path);
    write_file(metrics_path, metrics);

    const bool has_three = std::find(ks.begin(), ks.end(), 3) != ks.end();
    const auto& micro = report.row(has_three ? 3 : ks.back(), RowScope::Micro);
    out << "evaluated " << report.query_count << " queries at k in {";
    for (size_t i = 0; i < ks.size(); ++i) out << (i ? "," : "") << ks[i];
    out << "}\n";
    out << "k=" << micro.k << ": hit rate " << fixed(micro.hit_rate * 100.0, 1) << "%, mrr " << fixed(micro.mrr, 4)
        << ", token reduction " << fixed(micro.trr * 100.0, 1) << "%\n";
    out << "report: " << opt.out_path << "\nmetrics: " << metrics_path << "\n";
    return kExitOk;
}

int cmd_inspect(const Options& opt, std::ostream& out) {
    out << export_text(load_snapshot(opt.index_path));
    return kExitOk;
}

int cmd_serve(const Options& opt, std::ostream& out) {
    auto config = load_effective_config(opt);
    if (config.endpoints.empty()) throw UsageError("config lists no servers");
    if (opt.port) config.port = *opt.port;

    // Handle SIGINT/SIGTERM on a dedicated thread so stop() runs outside a
    // signal handler.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Gateway gateway(config);
    const int port = gateway.bind();
    const auto snap = gateway.snapshot();
    out << "serving " << snap->entries.size() << " tools on http://" << config.host << ":" << port << "\n"
        << "catalog_hash: " << snap->catalog_hash << std::endl;

    std::thread waiter([&gateway, signals] {
        int sig = 0;
        sigwait(&signals, &sig);
        gateway.stop();
    });
    gateway.listen_after_bind();
    // listen returned on its own (e.g. socket error): wake the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options opt;
    CLI::App app{"Semantic tool selection for MCP servers", "semtool"};
    app.require_subcommand(1, 1);
    app.add_option("--config", opt.config_path, "Gateway/indexer config (JSON)");
    app.add_option("--provider", opt.provider, "Embedding provider override")
        ->check(CLI::IsMember({"reference", "remote"}));
    app.add_option("--tokenizer", opt.tokenizer, "Tokenizer override, e.g. approximate-chars:4");

    auto* index = app.add_subcommand("index", "Discover tools and persist an index");
    index->add_option("--out", opt.out_path, "Index file to write")->required();

    auto* search = app.add_subcommand("search", "Rank tools for one query");
    search->add_option("--index", opt.index_path, "Index file")->required();
    search->add_option("query", opt.query, "Query text")->required();
    search->add_option("--k", opt.ks, "Number of tools to return")->expected(1)->check(CLI::PositiveNumber);
    search->add_option("--threshold", opt.threshold, "Minimum similarity");

    auto* eval = app.add_subcommand("eval", "Run the labeled query set and write reports");
    eval->add_option("--index", opt.index_path, "Index file")->required();
    eval->add_option("--dataset", opt.dataset_path, "Labeled query dataset (JSON)")->required();
    eval->add_option("--k", opt.ks, "K values (repeatable)")->check(CLI::PositiveNumber);
    eval->add_option("--threshold", opt.threshold, "Minimum similarity");
    eval->add_option("--format", opt.format, "Report format")->check(CLI::IsMember({"md", "markdown", "csv"}));
    eval->add_option("--out", opt.out_path, "Report file; metrics JSON is written next to it");
    eval->add_flag("--no-timing", opt.no_timing, "Leave latency out of the outputs");

    auto* inspect = app.add_subcommand("inspect", "Print one line per indexed tool");
    inspect->add_option("--index", opt.index_path, "Index file")->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
    serve->add_option("--port", opt.port, "Listen port (0 picks a free one)")->check(CLI::Range(0, 65535));

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "semtool: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*index) return cmd_index(opt, out);
        if (*search) return cmd_search(opt, out);
        if (*eval) return cmd_eval(opt, out);
        if (*inspect) return cmd_inspect(opt, out);
        if (*serve) return cmd_serve(opt, out);
    } catch (const UsageError& e) {
        err << "semtool: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        err << "semtool: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "semtool: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace semtool
