#include <gtest/gtest.h>

#include <cstdlib>

#include "dmap/cli.hpp"
#include "../support/fixtures.hpp"

using namespace dmap;

namespace {

struct Run {
    int rc = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "dmap");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.rc = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

const std::string kSample = std::string(DMAP_SOURCE_DIR) + "/samples/sample_bundle";
const std::string kDataset = std::string(DMAP_SOURCE_DIR) + "/samples/dataset.jsonl";

std::string build_sample(const fixtures::TempDir& dir, const std::string& name = "build") {
    auto out = (dir / name).string();
    auto r = run({"build", kSample, "-o", out, "--mock", "--seed", "7"});
    EXPECT_EQ(r.rc, cli::kExitOk) << r.err;
    return out;
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
    EXPECT_EQ(run({"frobnicate"}).rc, cli::kExitUsage);
    EXPECT_EQ(run({}).rc, cli::kExitUsage);
    EXPECT_EQ(run({"query", "somewhere"}).rc, cli::kExitUsage);
    EXPECT_EQ(run({"--help"}).rc, cli::kExitOk);
}

TEST(Cli, IngestValidate) {
    auto ok = run({"ingest-validate", kSample});
    EXPECT_EQ(ok.rc, cli::kExitOk);
    EXPECT_EQ(ok.out, "ok: sample-report (3 pages, 6 elements)\n");
    fixtures::TempDir dir;
    auto bad = run({"ingest-validate", dir.path().string()});
    EXPECT_EQ(bad.rc, cli::kExitValidation);
    EXPECT_NE(bad.err.find("bundle.json"), std::string::npos);
}

TEST(Cli, BuildWritesArtifactsAndInspectMatchesGolden) {
    fixtures::TempDir dir;
    auto out = build_sample(dir);
    for (auto f : {"dmap.json", "index.text.jsonl", "index.visual.jsonl", "manifest.json"})
        EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
    auto manifest = cli::RunManifest::from_json(nlohmann::json::parse(fixtures::read_bytes(fs::path(out) / "manifest.json")));
    EXPECT_TRUE(manifest.mock);
    EXPECT_EQ(manifest.seed, 7u);
    EXPECT_TRUE(fs::path(manifest.bundle).is_absolute());

    auto inspect = run({"inspect", out});
    EXPECT_EQ(inspect.rc, cli::kExitOk);
    EXPECT_EQ(inspect.out, fixtures::read_bytes(fs::path(DMAP_TEST_DATA) / "golden" / "sample_inspect.txt"));
}

TEST(Cli, BuildIsByteDeterministic) {
    fixtures::TempDir dir;
    auto a = build_sample(dir, "a"), b = build_sample(dir, "b");
    for (auto f : {"dmap.json", "index.text.jsonl", "index.visual.jsonl"})
        EXPECT_EQ(fixtures::read_bytes(fs::path(a) / f), fixtures::read_bytes(fs::path(b) / f)) << f;
}

TEST(Cli, QueryJsonIsDeterministic) {
    fixtures::TempDir dir;
    auto a = build_sample(dir, "a"), b = build_sample(dir, "b");
    auto qa = run({"query", a, "-q", "How much did the southern region grow?", "--mock", "--seed", "7"});
    auto qb = run({"query", b, "-q", "How much did the southern region grow?", "--mock", "--seed", "7"});
    ASSERT_EQ(qa.rc, cli::kExitOk) << qa.err;
    EXPECT_EQ(qa.out, qb.out);
    auto j = nlohmann::json::parse(qa.out);
    EXPECT_TRUE(j.contains("answer"));
    EXPECT_TRUE(j.contains("rounds"));
    EXPECT_NE(j["answer"].get<std::string>().find("eighteen percent"), std::string::npos);
}

TEST(Cli, EvalReportsAblationConfig) {
    fixtures::TempDir dir;
    auto out = build_sample(dir);
    auto report = (dir / "report.json").string();
    auto r = run({"eval", out, "--dataset", kDataset, "--mock", "--no-structured", "--report", report});
    ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
    auto j = nlohmann::json::parse(fixtures::read_bytes(report));
    EXPECT_EQ(j["config"]["enable_structured"], false);
    EXPECT_EQ(j["config"]["enable_text"], true);
    EXPECT_EQ(j["overall"]["total"], 4);
    for (const auto& q : j["questions"]) EXPECT_TRUE(q["trace"]["retrieval"]["structured"].empty());
    EXPECT_NE(r.out.find("accuracy"), std::string::npos);
}

TEST(Cli, EvalAcceptsParentOfBuildDirs) {
    fixtures::TempDir dir;
    build_sample(dir, "docs/sample");
    auto r = run({"eval", (dir / "docs").string(), "--dataset", kDataset, "--mock"});
    EXPECT_EQ(r.rc, cli::kExitOk) << r.err;
    EXPECT_TRUE(fs::exists(dir / "docs" / "report.json"));
}

TEST(Cli, AllPathsDisabledIsUsageError) {
    fixtures::TempDir dir;
    auto out = build_sample(dir);
    EXPECT_EQ(run({"eval", out, "--dataset", kDataset, "--mock", "--no-text", "--no-visual", "--no-structured"}).rc,
              cli::kExitUsage);
}

TEST(Cli, MissingBackendConfigurationIsBackendError) {
    fixtures::TempDir dir;
    const char* saved = std::getenv("DMAP_ENDPOINT");
    std::string keep = saved ? saved : "";
    ::unsetenv("DMAP_ENDPOINT");
    auto r = run({"build", kSample, "-o", (dir / "out").string()});
    if (saved) ::setenv("DMAP_ENDPOINT", keep.c_str(), 1);
    EXPECT_EQ(r.rc, cli::kExitBackend);
    EXPECT_NE(r.err.find("DMAP_ENDPOINT"), std::string::npos);
}

TEST(Cli, CorruptMapIsValidationError) {
    fixtures::TempDir dir;
    auto out = build_sample(dir);
    fixtures::write_bytes(fs::path(out) / "dmap.json", "{\"doc_id\": 3}");
    auto r = run({"inspect", out});
    EXPECT_EQ(r.rc, cli::kExitValidation);
    EXPECT_EQ(run({"inspect", (dir / "missing").string()}).rc, cli::kExitValidation);
}
