#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "stomax/config.hpp"
#include "stomax/error.hpp"
#include "stomax/run.hpp"

using namespace stomax;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text) {
    try {
        (void)parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("stomax_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name, std::ios::binary) << text;
        return path / name;
    }
};

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(STOMAX_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("minimal config yields the documented defaults") {
    const auto cfg = parse_config_text("[experiment]\nkind = single-run\n");
    CHECK(cfg.kind == "single-run");
    CHECK(cfg.samples == 1);
    CHECK(cfg.seed == 20240601);
    CHECK(cfg.dimension == 1);
    CHECK(cfg.cells_x == 64);
    CHECK(cfg.epsilon == 8.0);
    CHECK(cfg.mu == 8.0);
    CHECK(cfg.model == "tanh-saturable");
    CHECK(cfg.model_params == ModelParameters{{"drift", 1.0}, {"noise", 2.0}, {"offset", 1.0}});
    CHECK(cfg.noise_modes == 16);
    CHECK(cfg.noise_decay == 6.0);
    CHECK(cfg.scheme.theta == 1.0);
    CHECK(cfg.horizon == 1.0);
    CHECK(cfg.initial.kind == "mode");
    CHECK(cfg.output_dir == "out");

    const auto conv = parse_config_text("[experiment]\nkind = convergence\n");
    CHECK(conv.samples == 200);
    CHECK(conv.convergence.finest_steps == 4096);
    CHECK(conv.convergence.factors == std::vector<std::size_t>{128, 64, 32, 16, 8, 4});

    const auto en = parse_config_text("[experiment]\nkind = energy\n");
    CHECK(en.model == "additive");
    CHECK(en.scheme.theta == 0.5);
    CHECK(en.initial.kind == "zero");
    CHECK(en.samples == 1000);

    const auto tr = parse_config_text("[experiment]\nkind = truncation\n");
    CHECK(tr.cells_x == 16);
    CHECK(tr.truncation.inner_samples == 64);
}

TEST_CASE("values, lists, comments and model parameters") {
    const auto cfg = parse_config_text(R"(
# leading comment
[experiment]
kind = convergence   # trailing comment
samples = 12
seed = 5
threads = 3

[grid]
cells = 32

[model]
name = linear-damping
sigma = 0.25

[scheme]
theta = 0.5

[time]
finest_steps = 256
ladder = 32, 16 8
)");
    CHECK(cfg.samples == 12);
    CHECK(cfg.seed == 5);
    CHECK(cfg.threads == 3);
    CHECK(cfg.cells_x == 32);
    CHECK(cfg.model == "linear-damping");
    CHECK(cfg.model_params == ModelParameters{{"sigma", 0.25}});
    CHECK(cfg.scheme.theta == 0.5);
    CHECK(cfg.convergence.factors == std::vector<std::size_t>{32, 16, 8});

    const auto merged = parse_config_text("[experiment]\nkind = single-run\n[model]\ncoupling = 0.5\n");
    CHECK(merged.model_params.at("coupling") == 0.5);
    CHECK(merged.model_params.at("noise") == 2.0);
}

TEST_CASE("theta outside [0, 1] is rejected with a range message") {
    const auto msg = config_error("[experiment]\nkind = single-run\n[scheme]\ntheta = 1.5\n");
    CHECK(contains(msg, "scheme.theta"));
    CHECK(contains(msg, "out of range [0, 1]"));
}

TEST_CASE("a ladder factor that does not divide N is named") {
    const auto msg = config_error("[experiment]\nkind = convergence\n[time]\nfinest_steps = 100\nladder = 10 4 3\n");
    CHECK(contains(msg, "time.ladder: factor 3 does not divide time.finest_steps = 100"));
    CHECK_FALSE(contains(msg, "factor 10"));
    CHECK_FALSE(contains(msg, "factor 4 "));
}

TEST_CASE("all violations are reported together") {
    const auto msg = config_error(R"(
[experiment]
kind = single-run
samples = 0
colour = red
[grid]
cells = 1
[scheme]
theta = -0.1
picard_tol = abc
[noise]
decay = 0.5
[bogus]
x = 1
)");
    CHECK(contains(msg, "experiment.colour: unknown key"));
    CHECK(contains(msg, "bogus.x: unknown section [bogus]"));
    CHECK(contains(msg, "scheme.picard_tol: cannot parse value 'abc'"));
    const auto range = config_error(R"(
[experiment]
kind = single-run
samples = 0
[grid]
cells = 1
[scheme]
theta = -0.1
[noise]
decay = 0.5
)");
    CHECK(contains(range, "experiment.samples"));
    CHECK(contains(range, "grid.cells"));
    CHECK(contains(range, "scheme.theta"));
    CHECK(contains(range, "noise.decay"));
}

TEST_CASE("structural config errors") {
    CHECK(contains(config_error("[experiment]\n"), "experiment.kind: required"));
    CHECK(contains(config_error("[experiment]\nkind = weak-order\n"), "unknown kind 'weak-order'"));
    CHECK(contains(config_error("kind = single-run\n"), "outside of any section"));
    CHECK(contains(config_error("[experiment]\nkind = single-run\nkind = energy\n"), "duplicate key"));
    CHECK(contains(config_error("[experiment]\nkind = single-run\n[model]\nname = tanh-saturable\nslope = 1\n"),
                   "model.slope: unknown parameter"));
    CHECK(contains(config_error("[experiment]\nkind = single-run\n[model]\nname = cubic\n"), "unknown model 'cubic'"));
    CHECK(contains(config_error("[experiment]\nkind = single-run\n[medium]\nfile = missing.txt\n"),
                   "does not exist"));
    CHECK(contains(config_error("[experiment]\nkind = single-run\n[noise]\nmodes = 64\n"), "noise.modes"));
    CHECK(contains(config_error("[experiment]\nkind = energy\n[model]\nname = tanh-saturable\n"),
                   "energy experiment requires"));
    CHECK(contains(config_error("[experiment]\nkind = holder\n[holder]\nfine_steps = 16\nlags = 32 4\n"),
                   "lag 32 exceeds"));
    CHECK(contains(config_error("[experiment]\nkind = stability\n[stability]\npowers = 2 3\n"), "power 3"));
    CHECK_THROWS_AS(parse_config("/nonexistent/stomax.ini"), std::ios_base::failure);
}

TEST_CASE("medium files resolve relative to the config") {
    TempDir dir("medium");
    std::string values;
    for (int i = 0; i < 5; ++i) values += "2 ";
    for (int i = 0; i < 4; ++i) values += "3 ";
    dir.write("medium.txt", values + "\n");
    const auto path = dir.write("c.ini", "[experiment]\nkind = single-run\n[grid]\ncells = 4\n[noise]\nmodes = 3\n"
                                         "[medium]\nfile = medium.txt\n");
    const auto cfg = parse_config(path.string());
    CHECK(fs::equivalent(cfg.medium_file, dir.path / "medium.txt"));
    const auto p = build_problem(cfg);
    CHECK(p.medium->epsilon()[0] == 2.0);
    CHECK(p.medium->mu()[0] == 3.0);
}

TEST_CASE("numbers use 17 significant digits") {
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(1.0 / 3.0) == "0.33333333333333331");
    CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("run writes the documented artifacts") {
    TempDir dir("run");
    auto cfg = parse_config_text(
        "[experiment]\nkind = convergence\nsamples = 4\n[grid]\ncells = 16\n[noise]\nmodes = 8\n"
        "[time]\nfinest_steps = 64\nladder = 16 8 4 2\n");
    cfg.output_dir = (dir.path / "conv").string();
    std::ostringstream log;
    const auto r = run(cfg, log);
    REQUIRE(r.exit_code == 0);
    CHECK(r.failure_tag.empty());
    const auto ladder = slurp(dir.path / "conv" / "ladder.csv");
    CHECK(contains(ladder, "\ntau,ms_error,std_err\n"));
    CHECK(ladder.rfind("# seed = 20240601\n", 0) == 0);
    CHECK_FALSE(contains(ladder, "\r"));
    const auto meta = slurp(dir.path / "conv" / "meta.txt");
    CHECK(contains(meta, "fitted_order = "));
    CHECK(contains(meta, "seed = 20240601"));
    CHECK(contains(meta, "wall_time_s = "));
    CHECK(contains(slurp(dir.path / "conv" / "report.csv"), "# seed = 20240601"));
}

TEST_CASE("run failure tags name the stage") {
    std::ostringstream log;
    auto cfg = default_config("single-run");
    cfg.scheme.theta = 2.0;
    auto r = run(cfg, log);
    CHECK(r.exit_code == kExitConfig);
    CHECK(contains(r.failure_tag, "stomax-failure stage=validate code=2 error=ConfigError"));
    CHECK(r.failure_tag.find('\n') == std::string::npos);

    cfg = default_config("single-run");
    cfg.model_params = {{"drift", 1e6}, {"noise", 0.0}};
    cfg.initial.amplitude = 1e3;
    cfg.scheme.picard_max_iters = 2;
    TempDir dir("fail");
    cfg.output_dir = (dir.path / "x").string();
    r = run(cfg, log);
    CHECK(r.exit_code == kExitNumerical);
    CHECK(contains(r.failure_tag, "stage=single-run"));
    CHECK_FALSE(fs::exists(dir.path / "x" / "report.csv"));

    cfg = default_config("single-run");
    cfg.steps = 4;
    dir.write("blocker", "");
    cfg.output_dir = (dir.path / "blocker" / "sub").string();
    r = run(cfg, log);
    CHECK(r.exit_code == kExitIo);
    CHECK(contains(r.failure_tag, "stage=write"));
}

TEST_CASE("cli reruns are byte-identical and carry the seed") {
    TempDir dir("cli");
    const auto cfg = dir.write("e.ini", "[experiment]\nkind = energy\nsamples = 20\nthreads = 2\n"
                                        "[grid]\ncells = 8\n[noise]\nmodes = 4\n[time]\nsteps = 16\n");
    const std::string base = "energy --config " + cfg.string() + " --seed 31 --out ";
    REQUIRE(run_cli(base + (dir.path / "a").string(), dir.path / "a.log") == 0);
    REQUIRE(run_cli(base + (dir.path / "b").string(), dir.path / "b.log") == 0);
    for (const char* name : {"report.csv", "energy_trace.csv"}) {
        const auto a = slurp(dir.path / "a" / name);
        CHECK_FALSE(a.empty());
        CHECK(a == slurp(dir.path / "b" / name));
        CHECK(contains(a, "# seed = 31\n"));
    }
    CHECK(contains(slurp(dir.path / "a" / "meta.txt"), "seed = 31\n"));
    CHECK(contains(slurp(dir.path / "a" / "energy_trace.csv"), "\ntime,mean_energy,sample_std\n"));
}

TEST_CASE("cli energy run without noise gives a flat trace") {
    TempDir dir("flat");
    const auto cfg = dir.write("z.ini", "[experiment]\nkind = energy\nsamples = 3\n[grid]\ncells = 8\n"
                                        "[noise]\nmodes = 4\n[model]\nname = zero\n"
                                        "[initial]\nkind = mode\n[time]\nsteps = 16\n");
    REQUIRE(run_cli("energy --config " + cfg.string() + " --out " + (dir.path / "o").string(),
                    dir.path / "log") == 0);
    std::istringstream in(slurp(dir.path / "o" / "energy_trace.csv"));
    std::string line;
    std::vector<double> energies;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        energies.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    REQUIRE(energies.size() == 17);
    for (double e : energies) CHECK(e == doctest::Approx(energies.front()).epsilon(1e-12));
}

TEST_CASE("cli exit codes") {
    TempDir dir("codes");
    CHECK(run_cli("single-run --config " + (dir.path / "none.ini").string(), dir.path / "1.log") == kExitIo);
    CHECK(contains(slurp(dir.path / "1.log"), "stomax-failure stage=parse code=4"));
    const auto bad = dir.write("bad.ini", "[experiment]\nkind = single-run\n[scheme]\ntheta = 1.5\n");
    CHECK(run_cli("single-run --config " + bad.string(), dir.path / "2.log") == kExitConfig);
    CHECK(contains(slurp(dir.path / "2.log"), "code=2 error=ConfigError"));
    const auto good = dir.write("good.ini", "[experiment]\nkind = single-run\n");
    CHECK(run_cli("stability --config " + good.string(), dir.path / "3.log") == kExitConfig);
    CHECK(run_cli("single-run", dir.path / "4.log") == kExitConfig);
}
