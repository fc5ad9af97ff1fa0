#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

struct CliFixture {
    fs::path dir;

    CliFixture() {
        dir = fs::temp_directory_path() / ("spl_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(dir);
    }
    ~CliFixture() { fs::remove_all(dir); }

    CliResult run(const std::string& args) const {
        fs::path out_file = dir / "out.txt";
        std::string command = std::string(SPL_CLI_PATH) + " " + args + " > " +
                              out_file.string() + " 2>&1";
        int status = std::system(command.c_str());
        CliResult result;
        result.exit_code = WEXITSTATUS(status);
        std::ifstream in(out_file, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        result.output = buf.str();
        return result;
    }

    fs::path write(const std::string& name, const std::string& content) const {
        fs::path path = dir / name;
        std::ofstream out(path, std::ios::binary);
        out << content;
        return path;
    }

    std::string store_flags() const { return " --store-dir " + (dir / ".spl").string(); }
};

std::string repo_path(const std::string& rel) {
    return (fs::path(SPL_REPO_DIR) / rel).string();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("validate: clean file exits 0 with no output") {
    CliFixture cli;
    auto result = cli.run("validate " + repo_path("samples/qa_rag.spl"));
    CHECK(result.exit_code == 0);
    CHECK(result.output.empty());
}

TEST_CASE("validate: missing GENERATE exits 1 with the clause named") {
    CliFixture cli;
    auto file = cli.write("broken.spl", "PROMPT p SELECT context.q AS q;");
    auto result = cli.run("validate " + file.string());
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("GENERATE") != std::string::npos);
    CHECK(result.output.find("broken.spl:1:") != std::string::npos);
}

TEST_CASE("validate: semantic errors exit 2, warnings exit 0") {
    CliFixture cli;
    auto bad = cli.write("bad.spl",
                         "PROMPT p SELECT rag.query(42) AS docs GENERATE g(docs);");
    auto bad_result = cli.run("validate " + bad.string());
    CHECK(bad_result.exit_code == 2);
    CHECK(bad_result.output.find("error E_TYPE") != std::string::npos);

    auto warn = cli.write("warn.spl",
                          "PROMPT p WITH BUDGET 100 TOKENS SELECT context.a AS a LIMIT 200 "
                          "tokens GENERATE g(a);");
    auto warn_result = cli.run("validate " + warn.string());
    CHECK(warn_result.exit_code == 0);
    CHECK(warn_result.output.find("warning W_BUDGET_SUM") != std::string::npos);
}

TEST_CASE("explain: byte-identical to the renderer golden") {
    CliFixture cli;
    auto result = cli.run("explain " + repo_path("tests/fixtures/explain_scenario.spl") +
                          cli.store_flags());
    CHECK(result.exit_code == 0);
    CHECK(result.output == read_file(repo_path("tests/golden/explain_rag_qa.txt")));
}

TEST_CASE("explain: unpriced model degrades to unavailable cost") {
    CliFixture cli;
    auto file = cli.write("unpriced.spl",
                          "PROMPT p WITH BUDGET 1000 TOKENS USING MODEL mystery9 "
                          "SELECT context.q AS q LIMIT 100 tokens GENERATE g(q) "
                          "WITH OUTPUT BUDGET 200 TOKENS;");
    auto result = cli.run("explain " + file.string() + cli.store_flags());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("Estimated Cost: unavailable") != std::string::npos);
}

TEST_CASE("explain --json emits machine-readable allocations") {
    CliFixture cli;
    auto result = cli.run("explain " + repo_path("tests/fixtures/explain_scenario.spl") +
                          " --json" + cli.store_flags());
    CHECK(result.exit_code == 0);
    auto brace = result.output.find("\n{");
    REQUIRE(brace != std::string::npos);
    auto doc = nlohmann::json::parse(result.output.substr(brace));
    CHECK(doc["budget"] == 8000);
    CHECK(doc["allocations"].size() == 6);  // 4 sources + output + buffer
    CHECK(doc["allocations"][2]["name"] == "docs");
    CHECK(doc["allocations"][2]["allocated_tokens"] == 3000);
}

TEST_CASE("run: mock pipeline prints content; missing params exit 3") {
    CliFixture cli;
    auto file = cli.write("hello.spl",
                          "PROMPT hello SELECT context.name AS name GENERATE greet(name);");
    auto ok = cli.run("run " + file.string() + " --param name=world" + cli.store_flags());
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("mock response") != std::string::npos);

    auto missing = cli.run("run " + file.string() + cli.store_flags());
    CHECK(missing.exit_code == 3);
    CHECK(missing.output.find("context.name") != std::string::npos);
}

TEST_CASE("run --show-plan and --show-usage decorate the output") {
    CliFixture cli;
    auto file = cli.write("hello.spl",
                          "PROMPT hello WITH BUDGET 1000 TOKENS SELECT context.name AS name "
                          "LIMIT 50 tokens GENERATE greet(name) WITH OUTPUT BUDGET 200 TOKENS;");
    auto result = cli.run("run " + file.string() + " --param name=world --show-plan --show-usage" +
                          cli.store_flags());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("Execution Plan for: hello") != std::string::npos);
    CHECK(result.output.find("-- tokens:") != std::string::npos);
}

TEST_CASE("run twice with --cache-ttl reports a cache hit") {
    CliFixture cli;
    auto file = cli.write("hello.spl",
                          "PROMPT hello SELECT context.name AS name GENERATE greet(name);");
    std::string cmd = "run " + file.string() + " --param name=world --cache-ttl 3600 " +
                      "--show-usage" + cli.store_flags();
    auto first = cli.run(cmd);
    CHECK(first.exit_code == 0);
    CHECK(first.output.find("cache: miss") != std::string::npos);
    auto second = cli.run(cmd);
    CHECK(second.exit_code == 0);
    CHECK(second.output.find("cache: hit") != std::string::npos);
}

TEST_CASE("run respects the file's params via --param-file") {
    CliFixture cli;
    auto data = cli.write("question.txt", "What is the plan?");
    auto file = cli.write("hello.spl",
                          "PROMPT hello SELECT context.q AS q GENERATE answer(q);");
    auto result = cli.run("run " + file.string() + " --param-file q=" + data.string() +
                          " --show-usage" + cli.store_flags());
    CHECK(result.exit_code == 0);
}

TEST_CASE("benchmark writes a schema-valid report and winner works on it") {
    CliFixture cli;
    auto file = cli.write("bench.spl",
                          "PROMPT bench SELECT context.q AS q GENERATE answer(q);");
    fs::path report_path = cli.dir / "report.json";
    auto bench = cli.run("benchmark " + file.string() + " --models alpha,beta,gamma --output " +
                         report_path.string() + " --param q=hi" + cli.store_flags());
    CHECK(bench.exit_code == 0);
    CHECK(bench.output.find("winner (fastest):") != std::string::npos);

    auto doc = nlohmann::json::parse(read_file(report_path));
    CHECK(doc["schema_version"] == 1);
    REQUIRE(doc["records"].size() == 3);
    for (const auto& rec : doc["records"]) {
        CHECK(rec.contains("model"));
        CHECK(rec.contains("success"));
        CHECK(rec.contains("total_tokens"));
        CHECK(rec.contains("latency_ms"));
        CHECK(rec.contains("cost"));
        CHECK(rec["total_tokens"] == rec["input_tokens"].get<long long>() +
                                         rec["output_tokens"].get<long long>());
    }
    CHECK(doc.contains("winner"));

    auto winner = cli.run("winner " + report_path.string());
    CHECK(winner.exit_code == 0);
}

TEST_CASE("winner on the fixture report picks mistral and phi4") {
    CliFixture cli;
    auto fastest =
        cli.run("winner " + repo_path("tests/fixtures/benchmark_report.json") +
                " --objective fastest");
    CHECK(fastest.exit_code == 0);
    CHECK(fastest.output == "mistral\n");

    auto efficient =
        cli.run("winner " + repo_path("tests/fixtures/benchmark_report.json") +
                " --objective token_efficient");
    CHECK(efficient.exit_code == 0);
    CHECK(efficient.output == "phi4\n");
}

TEST_CASE("winner on a report with no successes exits nonzero") {
    CliFixture cli;
    auto report = cli.write("empty.json", R"({
      "schema_version": 1,
      "records": [{"model": "a", "success": false, "error": "TIMEOUT"}]
    })");
    auto result = cli.run("winner " + report.string());
    CHECK(result.exit_code == 3);
}

TEST_CASE("benchmark --apply-winner emits a patched copy, not an in-place edit") {
    CliFixture cli;
    std::string source =
        "PROMPT bench USING MODEL placeholder SELECT context.q AS q GENERATE answer(q);";
    auto file = cli.write("bench.spl", source);
    fs::path patched = cli.dir / "bench.winner.spl";
    auto result = cli.run("benchmark " + file.string() + " --models alpha --output " +
                          (cli.dir / "r.json").string() + " --apply-winner " + patched.string() +
                          " --param q=hi" + cli.store_flags());
    CHECK(result.exit_code == 0);
    CHECK(read_file(file) == source);  // original untouched
    std::string patched_text = read_file(patched);
    CHECK(patched_text.find("USING MODEL \"alpha\"") != std::string::npos);
}

TEST_CASE("parse prints the statement inventory") {
    CliFixture cli;
    auto result = cli.run("parse " + repo_path("samples/recommend_cte.spl"));
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("prompt analyze_and_recommend (4 select items, 2 ctes)") !=
          std::string::npos);
}

TEST_CASE("the whole corpus validates through the CLI") {
    CliFixture cli;
    for (const auto& entry : fs::directory_iterator(fs::path(SPL_REPO_DIR) / "samples")) {
        INFO(entry.path().string());
        auto result = cli.run("validate " + entry.path().string());
        CHECK(result.exit_code == 0);
    }
}
