#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "randes/checkpoint.hpp"
#include "randes/harness.hpp"
#include "randes/tensor.hpp"

using namespace randes;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Shared scratch tree with ready-made checkpoints. Built once; individual
// tests carve out their own store directories.
struct Sandbox {
    fs::path dir;
    fs::path base;
    std::vector<fs::path> models;
    std::vector<TensorMap> model_maps;
    TensorMap base_map;

    Sandbox() {
        dir = fs::temp_directory_path() / ("randes_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);

        Architecture arch;
        arch.blocks = 2;
        arch.width = 6;
        arch.input_dim = 3;
        arch.output_dim = 2;

        base_map = random_lattice_checkpoint(arch, 100);
        base = dir / "base.rdck";
        write_checkpoint(base_map, base);
        for (int i = 0; i < 12; ++i) {
            model_maps.push_back(random_lattice_checkpoint(arch, 101 + static_cast<uint64_t>(i)));
            models.push_back(dir / ("m" + std::to_string(i) + ".rdck"));
            write_checkpoint(model_maps.back(), models[static_cast<size_t>(i)]);
        }
    }
};

Sandbox& sandbox() {
    static Sandbox s;
    return s;
}

int run(const std::string& args, const fs::path& out_file = {}, const fs::path& err_file = {},
        const std::string& log_level = "quiet") {
    std::string cmd = "RANDES_LOG=" + log_level + " '" RANDES_CLI_PATH "' " + args;
    cmd += " >" + (out_file.empty() ? "/dev/null" : out_file.string());
    cmd += " 2>" + (err_file.empty() ? "/dev/null" : err_file.string());
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

json run_json(const std::string& args) {
    fs::path out = sandbox().dir / "stdout.json";
    REQUIRE(run(args, out) == 0);
    return json::parse(slurp(out));
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("version flag") {
    fs::path out = sandbox().dir / "version.txt";
    CHECK(run("--version", out) == 0);
    CHECK(slurp(out).find("randes 1.0.0") != std::string::npos);
}

TEST_CASE("a subcommand is required") { CHECK(run("") == 4); }

TEST_CASE("compress, retrieve, verify bytes") {
    Sandbox& sb = sandbox();
    fs::path store = sb.dir / "solo_store";

    json c = run_json("compress --base " + q(sb.base) + " --model only=" + q(sb.models[0]) +
                      " --out " + q(store) + " --mode srsf --seed 7");
    CHECK(c.at("tasks").size() == 1);
    CHECK(c.at("tasks")[0].at("task_id") == "only");
    CHECK(c.at("payload_bytes").get<uint64_t>() > 0);
    CHECK(c.at("total_bytes").get<uint64_t>() ==
          c.at("payload_bytes").get<uint64_t>() + c.at("manifest_bytes").get<uint64_t>());
    CHECK(fs::exists(store / "multi_delta.rdck"));
    CHECK(fs::exists(store / "manifest.json"));

    fs::path out = sb.dir / "retrieved.rdck";
    json r = run_json("retrieve --store " + q(store) + " --base " + q(sb.base) +
                      " --task only --out " + q(out));
    CHECK(r.at("task_id") == "only");
    CHECK(r.at("out") == out.string());

    // a single stored model retrieves bit exactly: identical file bytes
    CHECK(slurp(out) == slurp(sb.models[0]));
    CHECK(r.at("sha256") == file_digest(sb.models[0]));
}

TEST_CASE("compression is deterministic across runs") {
    Sandbox& sb = sandbox();
    fs::path s1 = sb.dir / "det1", s2 = sb.dir / "det2";
    std::string tail;
    for (int i = 0; i < 3; ++i) {
        tail += " --model t" + std::to_string(i) + "=" + q(sb.models[static_cast<size_t>(i)]);
    }
    CHECK(run("compress --base " + q(sb.base) + tail + " --out " + q(s1) + " --seed 3") == 0);
    CHECK(run("compress --base " + q(sb.base) + tail + " --out " + q(s2) + " --seed 3") == 0);
    CHECK(slurp(s1 / "multi_delta.rdck") == slurp(s2 / "multi_delta.rdck"));
    CHECK(slurp(s1 / "manifest.json") == slurp(s2 / "manifest.json"));
}

TEST_CASE("eight models cost one checkpoint plus bookkeeping") {
    Sandbox& sb = sandbox();
    fs::path store = sb.dir / "eight_store";
    std::string tail;
    for (int i = 0; i < 8; ++i) {
        tail += " --model t" + std::to_string(i) + "=" + q(sb.models[static_cast<size_t>(i)]);
    }
    CHECK(run("compress --base " + q(sb.base) + tail + " --out " + q(store)) == 0);

    uintmax_t one_checkpoint = fs::file_size(sb.base);
    uintmax_t payload = fs::file_size(store / "multi_delta.rdck");
    CHECK(static_cast<double>(payload) <= 1.05 * static_cast<double>(one_checkpoint));

    // every stored task still retrieves
    for (int i = 0; i < 8; ++i) {
        fs::path out = sb.dir / "eight_out.rdck";
        CHECK(run("retrieve --store " + q(store) + " --base " + q(sb.base) + " --task t" +
                  std::to_string(i) + " --out " + q(out)) == 0);
    }
}

TEST_CASE("the store grows by bookkeeping only as models are added") {
    Sandbox& sb = sandbox();
    fs::path store = sb.dir / "grow_store";
    CHECK(run("compress --base " + q(sb.base) + " --model t0=" + q(sb.models[0]) + " --out " +
              q(store)) == 0);

    uintmax_t payload = fs::file_size(store / "multi_delta.rdck");
    uintmax_t manifest = fs::file_size(store / "manifest.json");
    for (int i = 1; i < 12; ++i) {
        json a = run_json("add --store " + q(store) + " --base " + q(sb.base) + " --model t" +
                          std::to_string(i) + "=" + q(sb.models[static_cast<size_t>(i)]));
        CHECK(a.at("task_id") == "t" + std::to_string(i));
        CHECK(a.at("model_index") == i);
        CHECK(a.at("tasks") == i + 1);

        CHECK(fs::file_size(store / "multi_delta.rdck") == payload);
        uintmax_t m = fs::file_size(store / "manifest.json");
        CHECK(m > manifest);
        CHECK(m - manifest < 1024);  // well under a KiB per task
        manifest = m;
    }

    fs::path out = sb.dir / "grow_out.rdck";
    CHECK(run("retrieve --store " + q(store) + " --base " + q(sb.base) + " --task t11 --out " +
              q(out)) == 0);
}

TEST_CASE("adding and then removing a model restores the stored bytes") {
    Sandbox& sb = sandbox();
    fs::path store = sb.dir / "swap_store";
    CHECK(run("compress --base " + q(sb.base) + " --model a=" + q(sb.models[0]) + " --model b=" +
              q(sb.models[1]) + " --out " + q(store)) == 0);

    std::string payload_before = slurp(store / "multi_delta.rdck");
    std::string manifest_before = slurp(store / "manifest.json");

    CHECK(run("add --store " + q(store) + " --base " + q(sb.base) + " --model c=" +
              q(sb.models[2])) == 0);
    CHECK(slurp(store / "manifest.json") != manifest_before);

    json r = run_json("remove --store " + q(store) + " --base " + q(sb.base) + " --model c=" +
                      q(sb.models[2]) + " --task c");
    CHECK(r.at("tasks") == 2);

    CHECK(slurp(store / "multi_delta.rdck") == payload_before);
    CHECK(slurp(store / "manifest.json") == manifest_before);
}

TEST_CASE("failure modes map to distinct exit codes") {
    Sandbox& sb = sandbox();
    fs::path store = sb.dir / "err_store";
    REQUIRE(run("compress --base " + q(sb.base) + " --model a=" + q(sb.models[0]) + " --out " +
                q(store)) == 0);

    SUBCASE("duplicate task ids") {
        CHECK(run("compress --base " + q(sb.base) + " --model x=" + q(sb.models[0]) +
                  " --model x=" + q(sb.models[1]) + " --out " + q(sb.dir / "dup_store")) == 4);
    }
    SUBCASE("unknown task") {
        CHECK(run("retrieve --store " + q(store) + " --base " + q(sb.base) +
                  " --task nope --out " + q(sb.dir / "nope.rdck")) == 4);
    }
    SUBCASE("wrong base checkpoint") {
        CHECK(run("retrieve --store " + q(store) + " --base " + q(sb.models[5]) +
                  " --task a --out " + q(sb.dir / "nope.rdck")) == 5);
    }
    SUBCASE("missing input file") {
        CHECK(run("compress --base " + q(sb.dir / "missing.rdck") + " --model a=" +
                  q(sb.models[0]) + " --out " + q(sb.dir / "io_store")) == 3);
    }
    SUBCASE("unknown transform mode") {
        CHECK(run("compress --base " + q(sb.base) + " --model a=" + q(sb.models[0]) + " --out " +
                  q(sb.dir / "mode_store") + " --mode bogus") == 4);
    }
    SUBCASE("lambda out of range") {
        CHECK(run("compress --base " + q(sb.base) + " --model a=" + q(sb.models[0]) + " --out " +
                  q(sb.dir / "lam_store") + " --lambda 0") == 4);
    }
    SUBCASE("malformed model argument") {
        CHECK(run("compress --base " + q(sb.base) + " --model just_a_path --out " +
                  q(sb.dir / "name_store")) == 4);
    }
    SUBCASE("mismatched model structure") {
        Architecture other;
        other.blocks = 3;
        other.width = 5;
        other.input_dim = 3;
        other.output_dim = 2;
        fs::path odd = sb.dir / "odd.rdck";
        write_checkpoint(random_lattice_checkpoint(other, 1), odd);
        CHECK(run("compress --base " + q(sb.base) + " --model a=" + q(odd) + " --out " +
                  q(sb.dir / "odd_store")) == 2);
    }
    SUBCASE("removal with the wrong weights") {
        CHECK(run("remove --store " + q(store) + " --base " + q(sb.base) + " --model a=" +
                  q(sb.models[7])) == 5);
    }
    SUBCASE("task and model id disagree") {
        CHECK(run("remove --store " + q(store) + " --base " + q(sb.base) + " --model a=" +
                  q(sb.models[0]) + " --task b") == 4);
    }
    SUBCASE("bad sweep grid") {
        fs::path cfg = sb.dir / "tiny_cfg.json";
        std::ofstream(cfg) << R"({"suite_seed": 9, "tasks": 2, "blocks": 2, "width": 6,
                                  "input_dim": 3, "output_dim": 2})";
        CHECK(run("sweep --config " + q(cfg) + " --axis lambda --grid 1:0:1 --out " +
                  q(sb.dir / "bad_sweep")) == 4);
        CHECK(run("sweep --config " + q(cfg) + " --axis lambda --grid abc --out " +
                  q(sb.dir / "bad_sweep")) == 4);
    }
    SUBCASE("corrupt store payload") {
        fs::path broken = sb.dir / "broken_store";
        fs::create_directories(broken);
        fs::copy_file(store / "manifest.json", broken / "manifest.json",
                      fs::copy_options::overwrite_existing);
        std::ofstream(broken / "multi_delta.rdck", std::ios::binary) << "not a checkpoint";
        CHECK(run("retrieve --store " + q(broken) + " --base " + q(sb.base) +
                  " --task a --out " + q(sb.dir / "nope.rdck")) == 5);
    }
}

TEST_CASE("analyze emits reports from a store or from flags") {
    Sandbox& sb = sandbox();
    fs::path store = sb.dir / "an_store";
    std::string models;
    for (int i = 0; i < 3; ++i) {
        models += " --model t" + std::to_string(i) + "=" + q(sb.models[static_cast<size_t>(i)]);
    }
    REQUIRE(run("compress --base " + q(sb.base) + models + " --out " + q(store) +
                " --mode srsf --seed 5") == 0);

    json from_store = run_json("analyze --base " + q(sb.base) + models + " --store " + q(store));
    REQUIRE(from_store.at("reports").size() == 3);
    for (const auto& r : from_store.at("reports")) {
        CHECK(r.contains("direct_norm"));
        CHECK(r.contains("expansion_norm"));
        CHECK(r.at("pairwise").size() == 3);
    }
    CHECK(from_store.contains("raw_summary"));

    json from_flags =
        run_json("analyze --base " + q(sb.base) + models + " --mode srsf --seed 5 --lambda 1");
    CHECK(from_flags.at("reports").size() == 3);
    // flags replicate the store's configuration, so the numbers agree
    CHECK(from_flags.at("reports")[0].at("direct_norm").get<double>() ==
          doctest::Approx(from_store.at("reports")[0].at("direct_norm").get<double>())
              .epsilon(1e-12));

    fs::path adir = sb.dir / "analysis_out";
    REQUIRE(run("analyze --base " + q(sb.base) + models + " --store " + q(store) + " --out " +
                q(adir)) == 0);
    CHECK(fs::exists(adir / "analysis.json"));
    CHECK(fs::exists(adir / "analysis.csv"));
    CHECK(slurp(adir / "analysis.csv").rfind("task_a,task_b,cosine\n", 0) == 0);
}

TEST_CASE("sweep runs from a config file and is reproducible") {
    Sandbox& sb = sandbox();
    fs::path cfg = sb.dir / "sweep_cfg.json";
    std::ofstream(cfg) << R"({"suite_seed": 1, "tasks": 2, "blocks": 2, "width": 6,
                              "input_dim": 3, "output_dim": 2, "axis": "mode",
                              "lambda": 0.5, "settings": ["identity", "srsf"]})";

    fs::path out1 = sb.dir / "sweep1", out2 = sb.dir / "sweep2";
    json s = run_json("sweep --config " + q(cfg) + " --out " + q(out1));
    CHECK(s.at("axis") == "mode");
    CHECK(s.at("points").size() == 2);
    CHECK(fs::exists(out1 / "sweep.json"));
    CHECK(fs::exists(out1 / "sweep.csv"));

    CHECK(run("sweep --config " + q(cfg) + " --out " + q(out2)) == 0);
    CHECK(slurp(out1 / "sweep.json") == slurp(out2 / "sweep.json"));
    CHECK(slurp(out1 / "sweep.csv") == slurp(out2 / "sweep.csv"));
}

TEST_CASE("sweep default settings cover the whole axis") {
    Sandbox& sb = sandbox();
    fs::path cfg = sb.dir / "axis_cfg.json";
    std::ofstream(cfg) << R"({"suite_seed": 2, "tasks": 2, "blocks": 2, "width": 6,
                              "input_dim": 3, "output_dim": 2, "lambda": 0.5})";

    json modes = run_json("sweep --config " + q(cfg) + " --axis mode --out " +
                          q(sb.dir / "sweep_modes"));
    CHECK(modes.at("points").size() == 6);  // every transform mode

    std::string csv = slurp(sb.dir / "sweep_modes" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 * (2 + 1));

    json lambdas = run_json("sweep --config " + q(cfg) + " --axis lambda --out " +
                            q(sb.dir / "sweep_lam"));
    CHECK(lambdas.at("points").size() == 10);  // default lambda grid
    CHECK(lambdas.at("points")[0].at("setting") == "0.1");
}

TEST_CASE("log levels control stderr only") {
    Sandbox& sb = sandbox();
    fs::path out = sb.dir / "log_stdout.json";
    fs::path err = sb.dir / "log_stderr.txt";

    CHECK(run("compress --base " + q(sb.base) + " --model a=" + q(sb.models[0]) + " --out " +
              q(sb.dir / "log_store_q"),
              out, err, "quiet") == 0);
    CHECK(slurp(err).empty());
    json quiet_json = json::parse(slurp(out));

    CHECK(run("compress --base " + q(sb.base) + " --model a=" + q(sb.models[0]) + " --out " +
              q(sb.dir / "log_store_v"),
              out, err, "debug") == 0);
    CHECK(!slurp(err).empty());
    // stdout stays machine readable regardless of the log level
    CHECK(json::parse(slurp(out)).at("tasks") == quiet_json.at("tasks"));
}
