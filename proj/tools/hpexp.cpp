#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpexp/harness.hpp"

namespace fs = std::filesystem;
using hpexp::harness::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2 };

struct Common {
  std::string out_dir = ".";
  std::string name;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_name) {
  c.name = default_name;
  sub->add_option("--out-dir", c.out_dir, "Directory for <name>.csv and <name>.meta.json");
  sub->add_option("--name", c.name, "Output file stem")->capture_default_str();
}

json base_meta(const std::string& op, const json& params) {
  return {{"tool", "hpexp"}, {"version", hpexp::kToolVersion}, {"operation", op}, {"parameters", params}};
}

void write_outputs(const Common& c, const std::string& csv, const json& meta) {
  hpexp::harness::write_text(fs::path(c.out_dir) / (c.name + ".csv"), csv);
  hpexp::harness::write_text(fs::path(c.out_dir) / (c.name + ".meta.json"), meta.dump(2) + "\n");
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

// Sweep subcommands share the config code path, so CLI and `run` cannot drift apart.
int run_sweep(const std::string& op, json params, const Common& c) {
  params["op"] = op;
  params["name"] = c.name;
  hpexp::harness::validate_sweep(params, "$");
  const auto out = hpexp::harness::run_job({c.name, op, params});
  write_outputs(c, out.csv, out.meta);
  std::cout << out.csv;
  if (out.numerical_failure) {
    std::cerr << "hpexp: numerical failure recorded in " << c.name << ".meta.json\n";
    return kNumerical;
  }
  return kOk;
}

void put_p_list(json& params, const std::vector<int>& p_list, int p_min, int p_max) {
  if (!p_list.empty())
    params["p_list"] = p_list;
  else {
    params["p_min"] = p_min;
    params["p_max"] = p_max;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"p-version approximation experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hpexp::kToolVersion);

  // basis-count
  Common bc_common;
  int bc_dim = 2, bc_pmax = 10;
  std::string bc_family = "q";
  auto* bc = app.add_subcommand("basis-count", "Dimension of Q_p, P_p or S_p for p = 1..p_max");
  bc->add_option("--dim", bc_dim)->required()->check(CLI::Range(1, 3));
  bc->add_option("--family", bc_family)->required();
  bc->add_option("--p-max", bc_pmax)->required()->check(CLI::PositiveNumber);
  add_common(bc, bc_common, "basis_count");

  // project-sweep
  Common ps_common;
  int ps_dim = 2, ps_pmin = 2, ps_pmax = 20;
  std::vector<std::string> ps_kinds{"l2q", "l2p"};
  std::vector<int> ps_plist;
  auto* ps = app.add_subcommand("project-sweep", "Projection errors of prod sin(pi x_k) on the reference element");
  ps->add_option("--dim", ps_dim)->check(CLI::IsMember({2, 3}))->capture_default_str();
  ps->add_option("--kinds", ps_kinds, "Projection kinds: l2q l2p h1q h1s h1p")->delimiter(',')->capture_default_str();
  ps->add_option("--p-min", ps_pmin)->capture_default_str();
  ps->add_option("--p-max", ps_pmax)->capture_default_str();
  ps->add_option("--p-list", ps_plist)->delimiter(',');
  add_common(ps, ps_common, "project_sweep");

  // lemma-audit
  Common la_common;
  int la_dim = 2, la_Mmax = 10, la_mmax = 10;
  auto* la = app.add_subcommand("lemma-audit", "Exhaustive lattice audit of the Gamma-ratio bound");
  la->add_option("--dim", la_dim)->required()->check(CLI::Range(1, 3));
  la->add_option("--M-max", la_Mmax)->required()->check(CLI::Range(0, hpexp::bounds::kLemmaAuditCap));
  la->add_option("--m-max", la_mmax)->required()->check(CLI::NonNegativeNumber);
  add_common(la, la_common, "lemma_audit");

  // sharp-ratio
  int sr_dim = 2, sr_p = 1, sr_s = 1, sr_buffer = 6;
  auto* sr = app.add_subcommand("sharp-ratio", "Worst single-mode L2 projection ratio against phi");
  sr->add_option("--dim", sr_dim)->required()->check(CLI::IsMember({2, 3}));
  sr->add_option("--p", sr_p)->required()->check(CLI::NonNegativeNumber);
  sr->add_option("--s", sr_s)->required()->check(CLI::NonNegativeNumber);
  sr->add_option("--shell-buffer", sr_buffer)->capture_default_str()->check(CLI::NonNegativeNumber);

  // fem-lshape
  Common fl_common;
  std::string fl_family = "s";
  std::vector<int> fl_plist;
  int fl_pmin = 1, fl_pmax = 10;
  auto* fl = app.add_subcommand("fem-lshape", "Conforming FEM p-sweep on the L-shaped domain");
  fl->add_option("--family", fl_family)->required();
  fl->add_option("--p-min", fl_pmin)->capture_default_str();
  fl->add_option("--p-max", fl_pmax)->capture_default_str();
  fl->add_option("--p-list", fl_plist)->delimiter(',');
  add_common(fl, fl_common, "fem_lshape");

  // fem-sine
  Common fs_common;
  std::string fs_family = "s";
  std::vector<int> fs_plist;
  int fs_dim = 2, fs_n = 0, fs_pmin = 1, fs_pmax = 10;
  auto* fsn = app.add_subcommand("fem-sine", "Conforming FEM p-sweep for the sine solution on the unit box");
  fsn->add_option("--family", fs_family)->required();
  fsn->add_option("--dim", fs_dim)->check(CLI::IsMember({2, 3}))->capture_default_str();
  fsn->add_option("--n", fs_n, "Elements per axis (default 8 in 2D, 4 in 3D)");
  fsn->add_option("--p-min", fs_pmin)->capture_default_str();
  fsn->add_option("--p-max", fs_pmax)->capture_default_str();
  fsn->add_option("--p-list", fs_plist)->delimiter(',');
  add_common(fsn, fs_common, "fem_sine");

  // dg-sine
  Common dg_common;
  std::string dg_family = "p";
  std::vector<int> dg_plist;
  int dg_n = 8, dg_pmin = 1, dg_pmax = 8;
  double dg_gamma = 10.0;
  auto* dgs = app.add_subcommand("dg-sine", "SIP DG p-sweep for the 2D sine solution");
  dgs->add_option("--family", dg_family)->required();
  dgs->add_option("--n", dg_n)->capture_default_str();
  dgs->add_option("--gamma", dg_gamma)->capture_default_str();
  dgs->add_option("--p-min", dg_pmin)->capture_default_str();
  dgs->add_option("--p-max", dg_pmax)->capture_default_str();
  dgs->add_option("--p-list", dg_plist)->delimiter(',');
  add_common(dgs, dg_common, "dg_sine");

  // slope-fit
  std::string sf_csv, sf_key = "l2", sf_abscissa = "dof_root";
  int sf_dim = 2, sf_window = 2;
  double sf_floor = hpexp::harness::kErrorFloor;
  std::vector<std::string> sf_ratio;
  auto* sf = app.add_subcommand("slope-fit", "Exponential slope fit per method of a sweep CSV");
  sf->add_option("csv", sf_csv)->required()->check(CLI::ExistingFile);
  sf->add_option("--key", sf_key)->capture_default_str();
  sf->add_option("--abscissa", sf_abscissa)->check(CLI::IsMember({"p", "dof_root"}))->capture_default_str();
  sf->add_option("--dim", sf_dim)->check(CLI::Range(1, 3))->capture_default_str();
  sf->add_option("--window", sf_window)->check(CLI::PositiveNumber)->capture_default_str();
  sf->add_option("--floor", sf_floor)->capture_default_str();
  sf->add_option("--ratio", sf_ratio, "Two method tags A,B: report slope(A)/slope(B)")->delimiter(',')->expected(2);

  // run
  std::string run_config, run_out = ".";
  auto* run = app.add_subcommand("run", "Execute the sweeps declared in a JSON config");
  run->add_option("config", run_config)->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", run_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*bc) {
      const auto fam = hpexp::family_from_string(bc_family);
      std::ostringstream csv;
      csv << "p,dof\n";
      for (int p = 1; p <= bc_pmax; ++p) csv << p << ',' << hpexp::indexsets::dof_count({bc_dim, p, fam}) << '\n';
      write_outputs(bc_common, csv.str(),
                    base_meta("basis-count", {{"dim", bc_dim}, {"family", bc_family}, {"p_max", bc_pmax}}));
      std::cout << csv.str();
      return kOk;
    }
    if (*ps) {
      json params{{"dim", ps_dim}, {"kinds", ps_kinds}};
      put_p_list(params, ps_plist, ps_pmin, ps_pmax);
      return run_sweep("project-sweep", params, ps_common);
    }
    if (*la) {
      std::ostringstream csv;
      csv << "d,M,m,lattice_max,phi,holds,argmax\n";
      bool all_hold = true;
      for (int M = 0; M <= la_Mmax; ++M)
        for (int m = 0; m <= std::min(M, la_mmax); ++m) {
          const auto r = hpexp::bounds::lemma_audit(la_dim, M, m);
          all_hold = all_hold && r.holds;
          csv << r.d << ',' << r.M << ',' << r.m << ',' << hpexp::harness::format_double(r.lattice_max) << ','
              << hpexp::harness::format_double(r.phi) << ',' << (r.holds ? 1 : 0) << ",xi=" << join_ints(r.argmax_xi)
              << " rho=" << join_ints(r.argmax_rho) << '\n';
        }
      auto meta = base_meta("lemma-audit", {{"dim", la_dim}, {"M_max", la_Mmax}, {"m_max", la_mmax}});
      meta["all_hold"] = all_hold;
      write_outputs(la_common, csv.str(), meta);
      std::cout << csv.str();
      return kOk;
    }
    if (*sr) {
      const auto r = hpexp::bounds::sharp_l2_ratio(sr_dim, sr_p, sr_s, sr_buffer);
      const double ph = hpexp::bounds::phi(sr_dim, sr_p + 1, sr_s);
      std::printf("d=%d p=%d s=%d sharp_ratio=%.14e phi=%.14e argmax=%s holds=%d\n", sr_dim, sr_p, sr_s, r.max_ratio,
                  ph, r.argmax.str().c_str(), r.max_ratio <= ph * (1.0 + 1e-12) ? 1 : 0);
      return kOk;
    }
    if (*fl) {
      json params{{"family", fl_family}};
      put_p_list(params, fl_plist, fl_pmin, fl_pmax);
      return run_sweep("fem-lshape", params, fl_common);
    }
    if (*fsn) {
      json params{{"family", fs_family}, {"dim", fs_dim}};
      if (fs_n > 0) params["n"] = fs_n;
      put_p_list(params, fs_plist, fs_pmin, fs_pmax);
      return run_sweep("fem-sine", params, fs_common);
    }
    if (*dgs) {
      json params{{"family", dg_family}, {"n", dg_n}, {"gamma", dg_gamma}};
      put_p_list(params, dg_plist, dg_pmin, dg_pmax);
      return run_sweep("dg-sine", params, dg_common);
    }
    if (*sf) {
      const auto records = hpexp::harness::from_csv(hpexp::harness::read_text(sf_csv));
      const auto abscissa = hpexp::abscissa_from_string(sf_abscissa);
      std::map<std::string, hpexp::ConvergenceRecords> by_method;
      for (const auto& r : records) by_method[r.method].push_back(r);
      std::map<std::string, hpexp::SlopeFit> fits;
      for (const auto& [method, recs] : by_method) {
        const auto fit = hpexp::harness::fit_slope(recs, sf_key, abscissa, sf_dim, sf_window, sf_floor);
        fits[method] = fit;
        std::printf("method=%s key=%s abscissa=%s slope=%.14e ls_slope=%.14e r2=%.6f p=[%s]\n", method.c_str(),
                    sf_key.c_str(), sf_abscissa.c_str(), fit.slope, fit.ls_slope, fit.r2,
                    join_ints(fit.used_p).c_str());
      }
      if (sf_ratio.size() == 2) {
        if (!fits.count(sf_ratio[0]) || !fits.count(sf_ratio[1]))
          throw hpexp::harness::ConfigError("--ratio: method tag not present in the CSV");
        const auto rr = hpexp::harness::ratio_report(fits.at(sf_ratio[0]), fits.at(sf_ratio[1]));
        std::printf("ratio %s/%s=%.6f ideal=%.6f gap=%+.6f\n", sf_ratio[0].c_str(), sf_ratio[1].c_str(), rr.ratio,
                    rr.ideal, rr.gap);
      }
      return kOk;
    }
    if (*run) {
      json cfg;
      try {
        cfg = json::parse(hpexp::harness::read_text(run_config));
      } catch (const json::parse_error& e) {
        std::cerr << "hpexp: malformed config: " << e.what() << '\n';
        return kUsage;
      }
      const auto bundle = hpexp::harness::run_config(cfg);
      std::string dir = run_out;
      if (cfg.contains("output_dir") && run->count("--out-dir") == 0) dir = cfg.at("output_dir").get<std::string>();
      hpexp::harness::write_bundle(bundle, dir);
      for (const auto& o : bundle.outputs) std::cout << "wrote " << (fs::path(dir) / (o.name + ".csv")).string() << '\n';
      return bundle.any_failure() ? kNumerical : kOk;
    }
  } catch (const hpexp::harness::ConfigError& e) {
    std::cerr << "hpexp: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "hpexp: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "hpexp: numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
