// Exercises the installed command-line surface through a shell: exit codes,
// RESULT lines, and seeded reproducibility.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
};

RunResult run(const std::string& cmd) {
  std::FILE* pipe = ::popen((cmd + " 2>/dev/null").c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 512> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string cli_path() {
  const char* env = std::getenv("SCKN_CLI");
  REQUIRE(env != nullptr);
  return env;
}

std::string result_line(const std::string& out) {
  const auto pos = out.find("RESULT ");
  REQUIRE(pos != std::string::npos);
  const auto end = out.find('\n', pos);
  return out.substr(pos, end - pos);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sckn_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run(cli_path() + " definitely-not-a-command").exit_code == 2);
  CHECK(run(cli_path() + " eval").exit_code == 2);          // missing --checkpoint
  CHECK(run(cli_path() + " --bogus-flag gradcheck").exit_code == 2);
  CHECK(run(cli_path()).exit_code == 2);                    // no subcommand
}

TEST_CASE("runtime failures exit with code 1") {
  CHECK(run(cli_path() + " eval --checkpoint /nonexistent/model.sckn").exit_code == 1);
}

TEST_CASE("gradcheck passes and reports a machine-readable line") {
  RunResult r = run(cli_path() + " gradcheck --seed 0");
  CHECK(r.exit_code == 0);
  const std::string line = result_line(r.out);
  CHECK(line.find("cmd=gradcheck") != std::string::npos);
  CHECK(line.find("status=ok") != std::string::npos);
}

TEST_CASE("seeded runs emit identical RESULT lines in deterministic mode") {
  TempDir tmp;
  {
    std::ofstream cfg(tmp.file("toy.conf"));
    cfg << "data_kind = synthetic\nclasses = 2\nsynthetic_count = 48\n"
        << "synthetic_size = 16\nlayers = 1\nfilters = 8\npatch_sizes = 3\n"
        << "subsampling = 3\nepochs = 1\nbatch_size = 16\neta0 = 0.5\n"
        << "lambda = 0.02\npatches_per_layer = 1500\nprecond_patches = 1500\n"
        << "kmeans_iters = 10\nwsolve_tol = 1e-3\nwsolve_max_epochs = 8000\n";
  }
  const std::string base = cli_path() + " train-sup --config " + tmp.file("toy.conf") +
                           " --seed 11 --deterministic --out ";
  RunResult a = run(base + tmp.file("a.sckn"));
  RunResult b = run(base + tmp.file("b.sckn"));
  CHECK(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  CHECK(result_line(a.out) == result_line(b.out));

  RunResult ev = run(cli_path() + " eval --checkpoint " + tmp.file("a.sckn") + " --config " +
                     tmp.file("toy.conf") + " --seed 5");
  CHECK(ev.exit_code == 0);
  CHECK(result_line(ev.out).find("error_pct=") != std::string::npos);

  RunResult kb1 = run(cli_path() + " kernel-bench --config " + tmp.file("toy.conf") +
                      " --seed 3 --deterministic");
  RunResult kb2 = run(cli_path() + " kernel-bench --config " + tmp.file("toy.conf") +
                      " --seed 3 --deterministic");
  CHECK(kb1.exit_code == 0);
  CHECK(result_line(kb1.out) == result_line(kb2.out));
}

TEST_CASE("sr-apply writes the upscaled image") {
  TempDir tmp;
  {
    std::ofstream cfg(tmp.file("sr.conf"));
    cfg << "layers = 1\nfilters = 8\npatch_sizes = 3\nalpha = 4\nepochs = 0\n"
        << "sr_patches = 200\nsr_patch_size = 16\nsr_scale = 2\n"
        << "patches_per_layer = 1200\nprecond_patches = 1200\nkmeans_iters = 8\n";
  }
  // tiny gradient image as the training corpus and the input
  fs::create_directories(tmp.file("corpus"));
  {
    std::ofstream out(tmp.file("corpus/g.pgm"), std::ios::binary);
    out << "P5\n40 40\n255\n";
    for (int r = 0; r < 40; ++r)
      for (int c = 0; c < 40; ++c) out.put(static_cast<char>((r * 5 + c * 2) % 256));
  }
  RunResult tr = run(cli_path() + " sr-train --config " + tmp.file("sr.conf") + " --corpus " +
                     tmp.file("corpus") + " --seed 1 --out " + tmp.file("sr.sckn"));
  CHECK(tr.exit_code == 0);
  RunResult ap = run(cli_path() + " sr-apply --checkpoint " + tmp.file("sr.sckn") +
                     " --input " + tmp.file("corpus/g.pgm") + " --output " +
                     tmp.file("up.png") + " --factor 3");
  CHECK(ap.exit_code == 0);
  const std::string line = result_line(ap.out);
  CHECK(line.find("h=120") != std::string::npos);
  CHECK(line.find("w=120") != std::string::npos);
  CHECK(fs::exists(tmp.file("up.png")));
}
