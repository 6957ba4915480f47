#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "pvt2/model_io.hpp"

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(PVT2_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    CmdResult r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string write_micro_config() {
    const std::string path = "cli_micro.cfg";
    std::ofstream f(path);
    f << pvt2::render_config(pvt2::micro_config());
    return path;
}

} // namespace

TEST_CASE("describe prints the stage grid") {
    auto r = run_cli("describe --variant B0");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("C_1 = 32") != std::string::npos);
    REQUIRE(r.out.find("R_1 = 8") != std::string::npos);
    REQUIRE(r.out.find("total params") != std::string::npos);

    auto li = run_cli("describe --variant B2-Li");
    REQUIRE(li.exit_code == 0);
    REQUIRE(li.out.find("P_1 = 7") != std::string::npos);
}

TEST_CASE("describe accepts a config file") {
    const std::string path = "cli_describe.cfg";
    {
        std::ofstream f(path);
        f << "variant = B2\nstage1.attn = linear:7\n";
    }
    auto r = run_cli("describe --config " + path);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("P_1 = 7") != std::string::npos); // override applied
    REQUIRE(r.out.find("R_2 = 4") != std::string::npos); // rest of the grid intact
    std::remove(path.c_str());
}

TEST_CASE("usage errors exit with 2") {
    REQUIRE(run_cli("describe --variant Z9").exit_code == 2);
    REQUIRE(run_cli("frobnicate").exit_code == 2);
    REQUIRE(run_cli("describe --no-such-flag").exit_code == 2);
}

TEST_CASE("operational failures exit with 1") {
    REQUIRE(run_cli("cost --config does_not_exist.cfg").exit_code == 1);
    REQUIRE(run_cli("infer --variant B0 --weights does_not_exist.pvt2w --input-size 32").exit_code == 1);
}

TEST_CASE("cost emits a parseable csv whose total matches the text report") {
    const std::string csv_path = "cli_cost.csv";
    auto r = run_cli("cost --variant B2 --size 224 --csv " + csv_path);
    REQUIRE(r.exit_code == 0);

    std::ifstream f(csv_path);
    REQUIRE(f.good());
    std::string line;
    REQUIRE(std::getline(f, line));
    REQUIRE(line == "layer,params,macs");
    std::uint64_t total_params = 0, total_macs = 0;
    bool saw_total = false;
    while (std::getline(f, line)) {
        if (line.rfind("TOTAL,", 0) == 0) {
            const auto c1 = line.find(','), c2 = line.rfind(',');
            total_params = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
            total_macs = std::stoull(line.substr(c2 + 1));
            saw_total = true;
        }
    }
    REQUIRE(saw_total);
    REQUIRE(std::abs(double(total_params) / 25.4e6 - 1.0) < 0.015);
    REQUIRE(std::abs(double(total_macs) / 4.0e9 - 1.0) < 0.10);
    std::remove(csv_path.c_str());
}

TEST_CASE("sweep prints linear-attention core growth of at most 4.05") {
    auto r = run_cli("sweep --variant B2-Li --sizes 224,448");
    REQUIRE(r.exit_code == 0);
    std::istringstream out(r.out);
    std::string line;
    bool checked = false;
    while (std::getline(out, line)) {
        std::istringstream row(line);
        std::string variant;
        std::size_t size;
        std::uint64_t total, core;
        std::string totx, corex;
        if (row >> variant >> size >> total >> core >> totx >> corex) {
            if (variant == "B2-Li" && size == 448) {
                REQUIRE(std::stod(corex) <= 4.05);
                checked = true;
            }
        }
    }
    REQUIRE(checked);
}

TEST_CASE("identical argv and seed give byte-identical output") {
    const std::string cfg = write_micro_config();
    const std::string args = "infer --config " + cfg + " --input-size 32 --seed 3";
    auto a = run_cli(args);
    auto b = run_cli(args);
    REQUIRE(a.exit_code == 0);
    REQUIRE(a.out == b.out);
    REQUIRE(a.out.find("seed = 3") != std::string::npos);
    REQUIRE(a.out.find("logits: 1x10 sum = ") != std::string::npos);
    std::remove(cfg.c_str());
}

TEST_CASE("infer round-trips weights through save and load") {
    const std::string cfg = write_micro_config();
    const std::string wpath = "cli_micro.pvt2w";
    auto saved = run_cli("infer --config " + cfg + " --input-size 32 --seed 5 --save-weights " + wpath);
    REQUIRE(saved.exit_code == 0);
    auto loaded = run_cli("infer --config " + cfg + " --input-size 32 --seed 5 --weights " + wpath);
    REQUIRE(loaded.exit_code == 0);
    // same logits line: the stored weights equal the seeded initialization
    auto tail = [](const std::string& s) { return s.substr(s.find("logits:")); };
    REQUIRE(tail(saved.out) == tail(loaded.out));
    std::remove(cfg.c_str());
    std::remove(wpath.c_str());
}

TEST_CASE("oracle subcommand runs a quick pass") {
    auto r = run_cli("oracle --cases 6 --seed 1");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("PASSED") != std::string::npos);
}
