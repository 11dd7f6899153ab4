#include "repcoach/session_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = REPCOACH_CLI_PATH;

struct Scratch {
    fs::path dir;
    Scratch() {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("cli-" + std::to_string(rd()));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
};

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = kCli.string() + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("exit codes") {
    Scratch s;
    const auto log = s.dir / "log.txt";
    CHECK(run("", log) == 1);
    CHECK(run("frobnicate", log) == 1);
    CHECK(run("synth --sets 2 --bogus 3 --out " + (s.dir / "x").string(), log) == 1);
    CHECK(run("synth --sets 2", log) == 1);
    CHECK(slurp(log).find("--out") != std::string::npos);
    CHECK(run("synth --sets 0 --out " + (s.dir / "x").string(), log) == 1);
    CHECK(run("eval --model " + (s.dir / "missing.rpml").string() + " --data " + s.dir.string(), log) == 2);
    CHECK(run("preprocess --data " + (s.dir / "nothing").string() + " --out " + (s.dir / "p").string(), log) == 2);
    CHECK(run("--help", log) == 0);
}

TEST_CASE("synth is reproducible and preprocess leaves inputs untouched") {
    Scratch s;
    const auto log = s.dir / "log.txt";
    REQUIRE(run("synth --sets 3 --seed 7 --out " + (s.dir / "a").string(), log) == 0);
    REQUIRE(run("synth --sets 3 --seed 7 --out " + (s.dir / "b").string(), log) == 0);
    CHECK(slurp(log).find("resolved config") != std::string::npos);
    const auto bases = repcoach::list_sessions(s.dir / "a");
    REQUIRE(bases.size() == 3);
    for (const auto& b : bases) {
        for (const char* ext : {".csv", ".markers", ".meta"}) {
            CHECK(fs::exists(b.string() + ext));
            CHECK(slurp(b.string() + ext) == slurp((s.dir / "b" / b.filename()).string() + ext));
        }
    }
    const auto before = slurp(bases[0].string() + ".csv");
    REQUIRE(run("preprocess --data " + (s.dir / "a").string() + " --out " + (s.dir / "p").string(), log) == 0);
    CHECK(slurp(bases[0].string() + ".csv") == before);
    CHECK(repcoach::list_sessions(s.dir / "p").size() == 3);
}

TEST_CASE("train, evaluate, stream and benchmark") {
    Scratch s;
    const auto log = s.dir / "log.txt";
    const auto data = (s.dir / "data").string();
    REQUIRE(run("synth --sets 4 --seed 3 --out " + data, log) == 0);
    {
        std::ofstream cfg(s.dir / "tiny.cfg");
        cfg << "seg.stages = 3\nseg.first_channels = 8\ntrain.max_epochs = 1\ntrain.patience = 1\n"
               "train.windows_per_epoch = 64\ntrain.sequences_per_epoch = 8\ntrain.batch = 8\n";
    }
    const auto cfg = (s.dir / "tiny.cfg").string();
    const auto seg = (s.dir / "seg.rpml").string();
    const auto cls = (s.dir / "cls.rpml").string();
    REQUIRE(run("train-seg --data " + data + " --config " + cfg + " --out " + seg, log) == 0);
    CHECK(fs::exists(seg + ".history.jsonl"));
    REQUIRE(run("train-cls --data " + data + " --config " + cfg + " --model " + seg + " --out " + cls, log) == 0);

    const auto report = s.dir / "report.txt";
    REQUIRE(run("eval --model " + cls + " --data " + data + " --out " + report.string(), log) == 0);
    const auto text = slurp(report);
    CHECK(text.find("session set_000") != std::string::npos);
    CHECK(text.find("mean segmentation f1=") != std::string::npos);
    CHECK(text.find("mean near_failure f1=") != std::string::npos);

    const auto events = s.dir / "events.jsonl";
    REQUIRE(run("stream --model " + cls + " --data " + (s.dir / "data" / "set_000").string() + " --out " + events.string(), log) == 0);
    std::ifstream in(events);
    std::string line;
    long expected = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["kind"] == "prediction");
        CHECK(j["payload"]["tick"] == expected++);
    }
    CHECK(expected > 0);

    const auto json = s.dir / "bench.json";
    REQUIRE(run("bench --model " + cls + " --reps 1 --out " + json.string(), log) == 0);
    CHECK(nlohmann::json::parse(slurp(json))["rows"].size() == 32);
    std::istringstream table(slurp(log));
    int rows = 0;
    while (std::getline(table, line)) rows += line.find_first_not_of(' ') != std::string::npos && std::isdigit(line[line.find_first_not_of(' ')]);
    CHECK(rows == 32);
}
