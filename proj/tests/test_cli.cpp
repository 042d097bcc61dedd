#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

struct Output {
  int status = -1;
  std::string text;
};

// Runs the CLI with stderr folded into the captured output.
Output denois(const std::string& args) {
  const std::string cmd = "\""s + DENOIS_CLI + "\" " + args + " 2>&1";
  Output out;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.text.append(buf.data(), n);
  const int raw = ::pclose(p);
  out.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

struct Tmp {
  fs::path root = fs::temp_directory_path() / ("denois_cli_" + std::to_string(::getpid()));
  Tmp() { fs::create_directories(root); }
  ~Tmp() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return "\"" + (root / name).string() + "\""; }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("selftest passes") {
  const auto r = denois("selftest");
  INFO(r.text);
  CHECK(r.status == 0);
  CHECK(r.text.find("FAIL") == std::string::npos);
  CHECK(r.text.find("PASS") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(denois("").status != 0);
  CHECK(denois("transmogrify").status != 0);
  CHECK(denois("phantom --n 2").status != 0);
  CHECK(denois("refine --in x --out y --method guess").status != 0);
}

TEST_CASE("stage chain and eval") {
  Tmp t;
  REQUIRE(denois("phantom --n 3 --seed 4 --out " + (t / "ph")).status == 0);
  REQUIRE(denois("simulate --phantoms " + (t / "ph") + " --out " + (t / "clean")).status == 0);
  REQUIRE(denois("corrupt --in " + (t / "clean") + " --seed 9 --out " + (t / "cor")).status == 0);
  REQUIRE(denois("refine --in " + (t / "cor") + " --method classical --max-iters 20 --out " +
                 (t / "ref")).status == 0);
  const auto rec = denois("reconstruct --in " + (t / "ref") +
                          " --method pnp --denoiser tvprox --max-iters 20 --obs-variant refined --out " +
                          (t / "rec"));
  INFO(rec.text);
  REQUIRE(rec.status == 0);
  REQUIRE(denois("eval --recon " + (t / "rec") + " --gt " + (t / "ph") + " --out " +
                 (t / "m.csv")).status == 0);
  const std::string csv = slurp(t.path("m.csv"));
  CHECK(csv.rfind("id,method,obs_variant,rmse,dc,ace,gcnr\n", 0) == 0);
  CHECK(csv.find("p0002,pnp_tvprox,refined,") != std::string::npos);
}

TEST_CASE("errors name the offending path") {
  Tmp t;
  const auto r = denois("simulate --phantoms " + (t / "no_such_dir") + " --out " + (t / "x"));
  CHECK(r.status == 1);
  CHECK(r.text.find("denois: error:") != std::string::npos);
  CHECK(r.text.find("no_such_dir") != std::string::npos);

  {
    std::ofstream(t.path("plan.json")) << "{ not json";
  }
  const auto p = denois("matrix --plan " + (t / "plan.json") + " --out " + (t / "m"));
  CHECK(p.status == 1);
  CHECK(p.text.find("plan.json") != std::string::npos);

  {
    std::ofstream(t.path("plan2.json")) << R"({"rows": ["upside_down"]})";
  }
  const auto q = denois("matrix --plan " + (t / "plan2.json") + " --out " + (t / "m"));
  CHECK(q.status == 1);
  CHECK(q.text.find("upside_down") != std::string::npos);
}

TEST_CASE("an external denoiser that is not a protocol peer fails cleanly") {
  Tmp t;
  REQUIRE(denois("phantom --n 1 --out " + (t / "ph")).status == 0);
  REQUIRE(denois("simulate --phantoms " + (t / "ph") + " --out " + (t / "clean")).status == 0);
  const auto r = denois("reconstruct --in " + (t / "clean") +
                        " --method pnp --denoiser external --external \"" DENOIS_ECHO_STUB
                        " --version 7\" --out " + (t / "rec"));
  CHECK(r.status == 1);
  CHECK(r.text.find("version") != std::string::npos);
}
