#pragma once

#include <cstdlib>
#include <iostream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmap/bundle.hpp"
#include "dmap/embed.hpp"
#include "dmap/eval.hpp"
#include "dmap/llm.hpp"
#include "dmap/map_builder.hpp"
#include "dmap/offline_agents.hpp"
#include "dmap/reflective_qa.hpp"
#include "dmap/remote.hpp"
#include "dmap/serialize.hpp"

namespace dmap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitBackend = 2;
inline constexpr int kExitUsage = 64;

inline constexpr std::string_view kMapFile = "dmap.json";
inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kReportFile = "report.json";

/// How an output directory was built; later commands reopen the same
/// embedders from it so query vectors share the index's space.
struct RunManifest {
    std::string bundle;
    std::string dmap = std::string(kMapFile);
    std::string index_text = index_file_name(Modality::text);
    std::string index_visual = index_file_name(Modality::visual);
    bool mock = true;
    std::uint64_t seed = 0;
    std::string chat_model;
    std::string text_embedder;
    std::string visual_embedder;
    std::size_t dim = 0;
    RetrievalConfig retrieval;

    nlohmann::json to_json() const {
        return {{"bundle", bundle},
                {"dmap", dmap},
                {"index_text", index_text},
                {"index_visual", index_visual},
                {"mock", mock},
                {"seed", seed},
                {"chat_model", chat_model},
                {"text_embedder", text_embedder},
                {"visual_embedder", visual_embedder},
                {"dim", dim},
                {"retrieval",
                 {{"k_text", retrieval.k_text},
                  {"k_visual", retrieval.k_visual},
                  {"k_structured", retrieval.k_structured}}}};
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        try {
            m.bundle = j.at("bundle").get<std::string>();
            m.dmap = j.at("dmap").get<std::string>();
            m.index_text = j.at("index_text").get<std::string>();
            m.index_visual = j.at("index_visual").get<std::string>();
            m.mock = j.at("mock").get<bool>();
            m.seed = j.at("seed").get<std::uint64_t>();
            m.chat_model = j.at("chat_model").get<std::string>();
            m.text_embedder = j.at("text_embedder").get<std::string>();
            m.visual_embedder = j.at("visual_embedder").get<std::string>();
            m.dim = j.at("dim").get<std::size_t>();
            const auto& r = j.at("retrieval");
            m.retrieval.k_text = r.at("k_text").get<std::size_t>();
            m.retrieval.k_visual = r.at("k_visual").get<std::size_t>();
            m.retrieval.k_structured = r.at("k_structured").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(0, "manifest", e.what());
        }
        return m;
    }
};

/// Backend selection shared by every command.
struct BackendOptions {
    bool mock = false;
    std::uint64_t seed = 0;
    std::string model = "gpt-4o";
    std::string text_embedder = "colbertv2.0";
    std::string visual_embedder = "colpali";
    std::size_t dim = 32;
    std::string embed_endpoint;
};

struct Backends {
    std::shared_ptr<llm::ChatBackend> chat;
    std::shared_ptr<EmbeddingBackend> text;
    std::shared_ptr<EmbeddingBackend> visual;
};

namespace detail {

inline std::string env(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string{};
}

inline std::string require_endpoint(const std::string& flag_value) {
    auto endpoint = flag_value.empty() ? env("DMAP_ENDPOINT") : flag_value;
    if (endpoint.empty()) throw BackendError(0, false, "DMAP_ENDPOINT is not set (or pass --mock)");
    return endpoint;
}

inline std::shared_ptr<llm::ChatBackend> make_chat(const BackendOptions& o) {
    if (o.mock) return offline::make_backend();
    auto inner = std::make_shared<remote::ChatClient>(
        remote::ChatConfig{require_endpoint({}), env("DMAP_API_KEY"), o.model, true, 120});
    return std::make_shared<llm::RetryingBackend>(inner, llm::RetryPolicy{});
}

/// Embedders for a build, or reopened from a manifest for later commands.
inline std::pair<std::shared_ptr<EmbeddingBackend>, std::shared_ptr<EmbeddingBackend>> make_embedders(
    bool mock, std::uint64_t seed, std::size_t dim, const std::string& text_name, const std::string& visual_name,
    const std::string& endpoint_flag) {
    if (mock)
        return {std::make_shared<MockEmbedder>(seed, dim, text_name),
                std::make_shared<MockEmbedder>(seed + 1, dim, visual_name)};
    auto endpoint = endpoint_flag.empty() ? require_endpoint({}) : endpoint_flag;
    auto key = env("DMAP_API_KEY");
    return {std::make_shared<remote::EmbeddingClient>(endpoint, key, dim, text_name),
            std::make_shared<remote::EmbeddingClient>(endpoint, key, dim, visual_name)};
}

inline RunManifest read_manifest(const fs::path& dir) {
    auto path = dir / std::string(kManifestFile);
    if (!fs::exists(path)) throw Error("not a build directory (no manifest.json): " + dir.string());
    auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ParseError(0, "manifest", "manifest.json is not JSON");
    return RunManifest::from_json(j);
}

struct LoadedDoc {
    RunManifest manifest;
    eval::DocResources resources;
};

inline LoadedDoc load_doc(const fs::path& dir) {
    LoadedDoc d;
    d.manifest = read_manifest(dir);
    d.resources.map = deserialize_map(read_file(dir / d.manifest.dmap));
    auto report = validate_map(d.resources.map);
    if (!report.empty()) throw Error("invalid map " + (dir / d.manifest.dmap).string() + ": " + report.front().message);
    d.resources.index = load_index(dir, d.resources.map);
    d.resources.tree = render_summary_tree(d.resources.map);
    d.resources.bundle_root = d.manifest.bundle;
    return d;
}

/// Query-time backends: chat from the flags, embedders from the manifest.
inline Backends query_backends(const BackendOptions& o, const RunManifest& m) {
    Backends b;
    b.chat = make_chat(o);
    std::tie(b.text, b.visual) =
        make_embedders(m.mock, m.seed, m.dim, m.text_embedder, m.visual_embedder, o.embed_endpoint);
    return b;
}

}  // namespace detail

inline int cmd_ingest_validate(const fs::path& bundle_dir, std::ostream& out) {
    auto b = load_bundle(bundle_dir);
    auto ps = to_pages(b);
    out << "ok: " << b.doc_id << " (" << b.pages.size() << " pages, " << ps.elements.size() << " elements)\n";
    return kExitOk;
}

inline int cmd_build(const fs::path& bundle_dir, const fs::path& out_dir, const BackendOptions& o, std::ostream& out,
                     std::ostream& err) {
    auto bundle = load_bundle(bundle_dir);
    auto chat = detail::make_chat(o);
    const auto text_name = o.mock ? "mock-text" : o.text_embedder;
    const auto visual_name = o.mock ? "mock-visual" : o.visual_embedder;
    auto [text_be, visual_be] = detail::make_embedders(o.mock, o.seed, o.dim, text_name, visual_name, o.embed_endpoint);

    auto built = build_map(bundle, *chat);
    auto indexed = build_index(built.map, *text_be, *visual_be, bundle.root_dir);
    for (const auto& w : built.warnings) err << "warning: " << w << "\n";
    for (const auto& w : indexed.warnings) err << "warning: " << w << "\n";

    RunManifest m;
    m.bundle = fs::absolute(bundle_dir).lexically_normal().string();
    m.mock = o.mock;
    m.seed = o.seed;
    m.chat_model = chat->name();
    m.text_embedder = text_name;
    m.visual_embedder = visual_name;
    m.dim = o.dim;

    fs::create_directories(out_dir);
    write_file(out_dir / m.dmap, serialize_map(built.map));
    write_index(indexed.index, out_dir);
    write_file(out_dir / std::string(kManifestFile), m.to_json().dump(2) + "\n");
    out << "built " << built.map.doc_id << ": " << built.map.pages.size() << " pages, " << built.map.elements.size()
        << " elements -> " << out_dir.string() << "\n";
    return kExitOk;
}

inline int cmd_inspect(const fs::path& dir, std::ostream& out) {
    auto doc = detail::load_doc(dir);
    out << doc.resources.tree.text() << "\n";
    return kExitOk;
}

inline int cmd_query(const fs::path& dir, const std::string& question, const BackendOptions& o, int max_rounds,
                     std::ostream& out) {
    auto doc = detail::load_doc(dir);
    auto b = detail::query_backends(o, doc.manifest);
    const auto& r = doc.resources;
    QueryContext ctx{r.map, r.index, r.tree, *b.chat, *b.text, *b.visual};
    AnswerConfig cfg{doc.manifest.retrieval, max_rounds, r.bundle_root};
    out << to_json(answer_query(question, ctx, cfg)).dump(2) << "\n";
    return kExitOk;
}

/// Build directories under `dir`: `dir` itself when it holds a manifest,
/// otherwise each immediate subdirectory that does, in name order.
inline std::vector<fs::path> build_dirs(const fs::path& dir) {
    if (fs::exists(dir / std::string(kManifestFile))) return {dir};
    std::vector<fs::path> out;
    if (fs::is_directory(dir))
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_directory() && fs::exists(entry.path() / std::string(kManifestFile))) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw Error("no build directories under " + dir.string());
    return out;
}

inline int cmd_eval(const fs::path& dir, const fs::path& dataset, const eval::AblationConfig& cfg,
                    const eval::EvalOptions& opts, const BackendOptions& o, const fs::path& report_path,
                    std::ostream& out) {
    auto records = eval::parse_dataset(read_file(dataset));
    std::map<std::string, eval::DocResources> docs;
    std::optional<RunManifest> first;
    for (const auto& d : build_dirs(dir)) {
        auto doc = detail::load_doc(d);
        if (!first) first = doc.manifest;
        docs.emplace(doc.resources.map.doc_id, std::move(doc.resources));
    }
    auto b = detail::query_backends(o, *first);
    auto report = eval::evaluate(records, docs, {*b.chat, *b.chat, *b.text, *b.visual}, cfg, opts);
    auto path = report_path.empty() ? dir / std::string(kReportFile) : report_path;
    write_file(path, eval::to_json(report).dump(2) + "\n");
    out << "accuracy " << report.overall.correct << "/" << report.overall.total;
    if (report.overall.total)
        out << " = " << static_cast<double>(report.overall.correct) / static_cast<double>(report.overall.total);
    out << "; skipped " << report.skipped.size() << "; report " << path.string() << "\n";
    return kExitOk;
}

/// Runs one subcommand and returns its exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Hierarchical document map construction, retrieval, and question answering", "dmap"};
    app.require_subcommand(1);

    BackendOptions backend;
    auto add_backend_flags = [&](CLI::App* sub, bool build) {
        sub->add_flag("--mock", backend.mock, "Use deterministic offline backends");
        sub->add_option("--seed", backend.seed, "Seed for mock embedders");
        sub->add_option("--model", backend.model, "Chat model name");
        sub->add_option("--embed-endpoint", backend.embed_endpoint, "Embedding service URL (default DMAP_ENDPOINT)");
        if (build) {
            sub->add_option("--dim", backend.dim, "Embedding dimension")->check(CLI::PositiveNumber);
            sub->add_option("--text-embedder", backend.text_embedder, "Text embedding model");
            sub->add_option("--visual-embedder", backend.visual_embedder, "Visual embedding model");
        }
    };

    std::string bundle_dir, out_dir, dir, question, dataset, report_path;
    int max_rounds = 2;
    eval::AblationConfig ablation;
    eval::EvalOptions eval_opts;
    bool no_text = false, no_visual = false, no_structured = false;

    auto* validate = app.add_subcommand("ingest-validate", "Check a document bundle");
    validate->add_option("bundle", bundle_dir, "Bundle directory")->required();

    auto* build = app.add_subcommand("build", "Build the document map and embedding index");
    build->add_option("bundle", bundle_dir, "Bundle directory")->required();
    build->add_option("-o,--out", out_dir, "Output directory")->required();
    add_backend_flags(build, true);

    auto* inspect = app.add_subcommand("inspect", "Print the outline and page summaries");
    inspect->add_option("dir", dir, "Build directory")->required();

    auto* query = app.add_subcommand("query", "Answer one question");
    query->add_option("dir", dir, "Build directory")->required();
    query->add_option("-q,--question", question, "Question text")->required();
    query->add_option("--max-rounds", max_rounds, "Reflection rounds")->check(CLI::NonNegativeNumber);
    add_backend_flags(query, false);

    auto* ev = app.add_subcommand("eval", "Evaluate on a dataset");
    ev->add_option("dir", dir, "Build directory, or a directory of build directories")->required();
    ev->add_option("--dataset", dataset, "dataset.jsonl")->required();
    ev->add_flag("--no-text", no_text, "Disable the textual path");
    ev->add_flag("--no-visual", no_visual, "Disable the visual path");
    ev->add_flag("--no-structured", no_structured, "Disable the structured path");
    ev->add_option("--topk", eval_opts.topk, "Hits per path")->check(CLI::PositiveNumber);
    ev->add_option("--max-rounds", eval_opts.max_rounds, "Reflection rounds")->check(CLI::NonNegativeNumber);
    ev->add_option("--jobs", eval_opts.concurrency, "Questions evaluated concurrently")->check(CLI::PositiveNumber);
    ev->add_option("--report", report_path, "Report path (default <dir>/report.json)");
    add_backend_flags(ev, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        auto code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (validate->parsed()) return cmd_ingest_validate(bundle_dir, out);
        if (build->parsed()) return cmd_build(bundle_dir, out_dir, backend, out, err);
        if (inspect->parsed()) return cmd_inspect(dir, out);
        if (query->parsed()) return cmd_query(dir, question, backend, max_rounds, out);
        if (ev->parsed()) {
            ablation = {!no_text, !no_visual, !no_structured};
            if (no_text && no_visual && no_structured) {
                err << "error: at least one retrieval path must stay enabled\n";
                return kExitUsage;
            }
            return cmd_eval(dir, dataset, ablation, eval_opts, backend, report_path, out);
        }
    } catch (const BackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const ConstructionError& e) {
        err << "construction error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const BundleError& e) {
        err << "invalid bundle";
        if (e.page()) err << " (page " << e.page() << ")";
        err << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const ParseError& e) {
        err << "parse error at " << e.field() << " (byte " << e.offset() << "): " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}

}  // namespace dmap::cli
