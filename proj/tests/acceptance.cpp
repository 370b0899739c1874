// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance <path to the vheston binary>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vheston/curves.hpp"
#include "vheston/kernels.hpp"
#include "vheston/riccati.hpp"
#include "vheston/simulate.hpp"
#include "vheston/skew.hpp"

using namespace vheston;

namespace {

// Market of the strategy-sensitivity study; V0 and phi only matter for the
// Monte Carlo criteria, which set them explicitly.
ModelParams baseline(double level = 0.04) {
  ModelParams m;
  m.V0 = level;
  m.kappa = 0.1;
  m.phi = level;
  m.sigma = 0.02;
  m.rho = -0.7;
  m.theta = 0.5;
  m.rate = RateCurve(0.01);
  return m;
}

ModelParams skew_market() {
  ModelParams m;
  m.V0 = 0.0392;
  m.kappa = 0.1;
  m.phi = 0.3156;
  m.sigma = 1.044;
  m.rho = -0.681;
  m.theta = 0.0;
  return m;
}

SampledKernel rough(double H, double T, std::size_t N) { return SampledKernel(KernelSpec::fractional(H), TimeGrid(T, N)); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// 1. Markovian limit against an RK4 integration of the Riccati ODE.
Outcome classical_limit() {
  const auto start = std::chrono::steady_clock::now();
  const ModelParams m = baseline();
  const auto k = rough(0.5, 1.0, 500);
  double psi_err = 0.0, a_err = 0.0;
  for (const auto& u : {UtilitySpec::power(0.5), UtilitySpec::exponential(0.5)}) {
    const auto psi = solve_psi(m, u, k);
    const auto& cf = psi.coefficients;
    const auto ode = oracle::riccati_ode_rk4(cf.a, cf.b, cf.d, 1.0, 500);
    const auto a = optimal_strategy(m, u, psi);
    const double gamma = u.gamma();
    for (std::size_t i = 0; i <= 500; ++i) {
      psi_err = std::max(psi_err, std::abs(psi.psi[i] - ode[i]));
      const double tau = ode[500 - i];  // psi(T - t_i)
      double want;
      if (u.is_power()) {
        const double c = (1.0 - gamma) / (1.0 - gamma + gamma * m.rho * m.rho);
        want = (m.theta + m.rho * c * m.sigma * tau) / (1.0 - gamma);
      } else {
        const double t = k.grid().node(i);
        want = std::exp(-0.01 * (1.0 - t)) * (m.theta + m.rho * m.sigma * tau) / gamma;
      }
      a_err = std::max(a_err, std::abs(a.values[i] - want));
    }
  }
  const double secs = elapsed_since(start);
  return {psi_err <= 1e-4 && a_err <= 1e-4 && secs < 1.0,
          "max|psi-ode| " + fmt("%.2e", psi_err) + ", max|A-A_ode| " + fmt("%.2e", a_err) + ", N=500, both utilities"};
}

// 2. A_0 across Hurst indices.
Outcome hurst_trends() {
  const auto start = std::chrono::steady_clock::now();
  const ModelParams m = baseline();
  std::vector<double> power, expo;
  for (double H : {0.05, 0.1, 0.2, 0.3, 0.4, 0.5}) {
    const auto k = rough(H, 1.0, 500);
    for (const auto& u : {UtilitySpec::power(0.5), UtilitySpec::exponential(0.5)}) {
      const double a0 = optimal_strategy(m, u, solve_psi(m, u, k)).values[0];
      (u.is_power() ? power : expo).push_back(a0);
    }
  }
  bool ok = true;
  std::string detail = "A0 power";
  for (std::size_t i = 0; i < power.size(); ++i) {
    detail += " " + fmt("%.6f", power[i]);
    if (i > 0 && !(power[i] > power[i - 1])) ok = false;
  }
  detail += " | exponential";
  for (std::size_t i = 0; i < expo.size(); ++i) {
    detail += " " + fmt("%.6f", expo[i]);
    if (i > 0 && !(expo[i] < expo[i - 1])) ok = false;
  }
  return {ok && elapsed_since(start) < 10.0, detail};
}

// 3. Resolvent equation residual and its refinement.
Outcome resolvent_identity() {
  bool ok = true;
  std::string detail;
  for (double H : {0.12, 0.3}) {
    for (double lambda : {0.093, 0.107}) {
      const double coarse = resolvent_second_kind(rough(H, 1.0, 500), lambda).residual;
      const double fine = resolvent_second_kind(rough(H, 1.0, 1000), lambda).residual;
      const double ratio = coarse / fine;
      ok = ok && fine <= 1e-3 && ratio >= 1.5;
      detail += "H=" + fmt("%g", H) + " l=" + fmt("%g", lambda) + ": " + fmt("%.2e", fine) + " (x" + fmt("%.2f", ratio) + ") ";
    }
  }
  return {ok, detail};
}

// 4. Value-function identity under refinement. With K = 1 the discrete
// schemes satisfy it to rounding, so "decreasing" is read as "decreasing or
// already at the rounding floor".
Outcome value_function_identity() {
  const ModelParams m = baseline();
  const auto u = UtilitySpec::power(0.5);
  bool ok = true;
  std::string detail;
  for (double H : {0.12, 0.5}) {
    std::vector<double> r;
    double scale = 1.0;
    for (std::size_t N : {250u, 500u, 1000u}) {
      const auto k = rough(H, 1.0, N);
      const auto psi = solve_power_psi(m, u, k);
      r.push_back(identity_residual(m, u, psi, k, psi.metadata.lambda));
      for (double p : psi.psi.values()) scale = std::max(scale, std::abs(p));
    }
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    const bool decreasing = r[1] < r[0] && r[2] < r[1];
    const bool at_floor = r[0] <= floor && r[1] <= floor && r[2] <= floor;
    ok = ok && r[2] <= 1e-3 && (decreasing || at_floor);
    detail += "H=" + fmt("%g", H) + ": " + fmt("%.2e", r[0]) + ", " + fmt("%.2e", r[1]) + ", " + fmt("%.2e", r[2]) + " at N=250,500,1000";
    if (!decreasing && at_floor) detail += " (rounding floor " + fmt("%.1e", floor) + ")";
    detail += "  ";
  }
  return {ok, detail};
}

// 5. M_0 identity by Monte Carlo under the tilted measure.
Outcome value_identity() {
  const auto start = std::chrono::steady_clock::now();
  const auto r = verify_m_identity(baseline(), UtilitySpec::power(0.5), rough(0.3, 1.0, 200), 100000, 20240915);
  const double z = (r.estimate.mean - r.reference) / r.estimate.std_error;
  const double secs = elapsed_since(start);
  return {std::abs(z) <= 3.0 && secs < 120.0,
          "estimate " + fmt("%.10f", r.estimate.mean) + " +- " + fmt("%.2e", r.estimate.std_error) + ", M0^(1/c) " +
              fmt("%.10f", r.reference) + ", z " + fmt("%.2f", z) + ", 100k paths, N=200"};
}

// 6. Optimal strategy beats scaled copies on common random numbers.
Outcome optimality(const UtilitySpec& u) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> scales{0.5, 0.8, 1.2, 1.5};
  const auto cmp = compare_strategies(baseline(0.3156), u, rough(0.3, 0.5, 100), scales, 50000, 20240916, 1.0);
  bool ok = true;
  std::string detail = u.is_power() ? "power gaps/stderr:" : "exponential gaps/stderr:";
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double z = cmp.gaps[i].mean / cmp.gaps[i].std_error;
    ok = ok && z > 2.0;
    detail += " s=" + fmt("%g", scales[i]) + " " + fmt("%.2f", z);
  }
  const double secs = elapsed_since(start);
  return {ok && secs < 120.0, detail + ", 50k paths, N=100, T=0.5"};
}

// 7. J is a martingale under A* and drifts down under 1.5 A*.
Outcome martingale() {
  const ModelParams m = baseline(0.3156);
  const auto k = rough(0.3, 0.5, 100);
  const std::vector<std::size_t> checks{25, 50, 100};
  bool ok = true;
  std::string detail;
  for (const auto& u : {UtilitySpec::power(0.5), UtilitySpec::exponential(0.5)}) {
    const auto best = process_statistics(m, u, k, 1.0, checks, 50000, 20240917, 1.0);
    detail += u.is_power() ? "power z(A*)" : "exponential z(A*)";
    for (const auto& inc : best.increments) {
      const double z = inc.mean / inc.std_error;
      ok = ok && std::abs(z) <= 3.0;
      detail += " " + fmt("%.2f", z);
    }
    const auto worse = process_statistics(m, u, k, 1.5, checks, 50000, 20240917, 1.0);
    detail += " z(1.5A*)";
    for (const auto& inc : worse.increments) {
      const double z = inc.mean / inc.std_error;
      ok = ok && z <= 3.0;
      detail += " " + fmt("%.2f", z);
    }
    detail += "  ";
  }
  return {ok, detail + "checkpoints 0.25T 0.5T T"};
}

// 8. Rough skew explodes at short maturities; H = 1/2 matches Heston.
Outcome skew_explosion() {
  const ModelParams m = skew_market();
  const auto rough_curve = atm_skew_curve(m, KernelSpec::fractional(0.12), {0.1, 1.0});
  const auto classic_curve = atm_skew_curve(m, KernelSpec::fractional(0.5), {0.1, 1.0});
  const double rough_ratio = std::abs(rough_curve[0].atm_skew / rough_curve[1].atm_skew);
  const double classic_ratio = std::abs(classic_curve[0].atm_skew / classic_curve[1].atm_skew);
  double cf_err = 0.0;
  for (double T : {0.1, 1.0}) {
    for (double u = -20.0; u <= 20.0; u += 0.25) {
      const cplx got = characteristic_fn({cplx(u, 0.0), T, m, KernelSpec::fractional(0.5), 200});
      const cplx want = oracle::heston_cf(cplx(u, 0.0), T, m.V0, m.kappa, m.phi, m.sigma, m.rho);
      cf_err = std::max(cf_err, std::abs(got - want));
    }
  }
  return {rough_ratio > 2.0 && rough_ratio > classic_ratio && cf_err <= 1e-4,
          "skew ratio H=0.12 " + fmt("%.3f", rough_ratio) + ", H=0.5 " + fmt("%.3f", classic_ratio) +
              ", max|cf-heston| " + fmt("%.2e", cf_err)};
}

// 9. Feasibility margins against hand arithmetic.
AssumptionReport report_for(const ModelParams& m, const UtilitySpec& u) {
  try {
    const auto psi = solve_psi(m, u, rough(0.3, 1.0, 500));
    return check_feasibility(m, u, optimal_strategy(m, u, psi));
  } catch (const NumericalFailure&) {
    return feasibility_without_strategy(m, u);
  }
}

Outcome feasibility_ledger() {
  const auto power = UtilitySpec::power(0.5);
  const auto expo = UtilitySpec::exponential(0.5);
  const ModelParams base = baseline();
  ModelParams wild = base;
  wild.sigma = 10.0;

  double worst = 0.0;
  auto agree = [&](const std::optional<double>& got, double want) {
    if (!got) return false;
    worst = std::max(worst, std::abs(*got - want));
    return std::abs(*got - want) <= 1e-12;
  };
  // gamma/(1-gamma) = 1, c = 0.5/0.745, p scan starts at 1/(2c)
  const double c = 0.5 / 0.745;
  const double lower = 1.0 / (2.0 * c);
  const double p = lower * std::pow(64.0 / lower, 1.0 / 64.0);

  const auto pw = report_for(base, power);
  bool ok = pw.pass && std::abs(pw.lambda - 0.107) <= 1e-12;
  ok = agree(pw.conditions[0].margin, 0.01 - 6.0 * 0.25 * 0.0004) && ok;
  ok = agree(pw.conditions[1].margin, 0.107) && ok;
  ok = agree(pw.conditions[2].margin, 0.107 * 0.107 - 2.0 * p * 0.25 * 0.0004) && ok;

  const auto ex = report_for(base, expo);
  ok = ok && ex.pass && std::abs(ex.lambda - 0.093) <= 1e-12;
  ok = agree(ex.conditions[0].margin, 0.1 - 0.7 * 0.02 * 0.5) && ok;

  const auto pw_wild = report_for(wild, power);
  ok = ok && !pw_wild.pass;
  ok = agree(pw_wild.conditions[0].margin, 0.01 - 6.0 * 0.25 * 100.0) && ok;
  ok = agree(pw_wild.conditions[1].margin, 0.1 + 0.7 * 0.5 * 10.0) && ok;

  const auto ex_wild = report_for(wild, expo);
  ok = ok && !ex_wild.pass;
  ok = agree(ex_wild.conditions[0].margin, 0.1 - 0.7 * 10.0 * 0.5) && ok;

  return {ok, "power lambda " + fmt("%.3f", pw.lambda) + " exponential lambda " + fmt("%.3f", ex.lambda) +
                  ", sigma=10 fails both, max margin deviation " + fmt("%.1e", worst)};
}

// 10. The binary writes identical bytes serially and on 8 threads.
Outcome determinism(const std::string& cli) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "vheston_acceptance";
  fs::remove_all(root);
  const std::string config = std::string(VHESTON_CONFIG_DIR) + "/simulate.json";
  auto run = [&](const std::string& out, const std::string& extra) {
    const std::string cmd = cli + " simulate --config " + config + " --out " + (root / out).string() + extra + " > /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto slurp = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const int a = run("first", ""), b = run("second", ""), c = run("threads8", " --threads 8");
  if (a != 0 || b != 0 || c != 0) return {false, "simulate exited with " + std::to_string(a) + "/" + std::to_string(b) + "/" + std::to_string(c)};
  bool ok = true;
  std::size_t bytes = 0;
  for (const char* file : {"simulate.json", "moments.csv", "comparison.csv"}) {
    const std::string x = slurp(root / "first" / file);
    bytes += x.size();
    ok = ok && !x.empty() && x == slurp(root / "second" / file) && x == slurp(root / "threads8" / file);
  }
  fs::remove_all(root);
  return {ok, "3 files, " + std::to_string(bytes) + " bytes, serial x2 and --threads 8 identical"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <vheston binary>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  criterion(1, "classical limit", classical_limit);
  criterion(2, "strategy trends in H", hurst_trends);
  criterion(3, "resolvent identity", resolvent_identity);
  criterion(4, "value-function identity", value_function_identity);
  criterion(5, "M0 identity by Monte Carlo", value_identity);
  criterion(6, "optimality ordering (power)", [] { return optimality(UtilitySpec::power(0.5)); });
  criterion(6, "optimality ordering (exponential)", [] { return optimality(UtilitySpec::exponential(0.5)); });
  criterion(7, "martingale diagnostic", martingale);
  criterion(8, "ATM skew explosion", skew_explosion);
  criterion(9, "feasibility margins", feasibility_ledger);
  criterion(10, "determinism", [&] { return determinism(cli); });
  std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
