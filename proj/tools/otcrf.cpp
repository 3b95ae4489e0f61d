#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <omp.h>

#include "otcrf/analysis.hpp"
#include "otcrf/config.hpp"
#include "otcrf/error.hpp"
#include "otcrf/flow.hpp"
#include "otcrf/pipeline.hpp"
#include "otcrf/plot.hpp"

namespace fs = std::filesystem;
using namespace otcrf;

namespace {

std::mutex io_mutex;

struct Options {
  std::string field;
  std::vector<std::string> runs;
  std::string out = "out";
  std::string plots;
};

struct Job {
  std::string field;  // empty when construct is driven by a run file
  std::string run;
  fs::path out;
  std::string label;
};

void log_line(const std::string& msg) {
  std::lock_guard<std::mutex> lock(io_mutex);
  std::cerr << msg << '\n';
}

std::string read_file(const fs::path& p, const std::string& what) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::MissingInput, fmt::format("cannot open {} {}", what, p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, fmt::format("cannot create {}: {}", p.parent_path().string(), ec.message()));
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

OTStructure load_structure(const fs::path& out) {
  const fs::path p = out / "structure.txt";
  std::istringstream in(read_file(p, "structure report (run construct first)"));
  return read_structure_report(in, p.string());
}

std::vector<ObservableRecord> load_series(const fs::path& out) {
  const fs::path p = out / "timeseries.csv";
  std::istringstream in(read_file(p, "time series (run flow first)"));
  return read_csv(in, p.string());
}

void cmd_construct(const Job& job) {
  const std::string field = job.field.empty() ? load_run_config(job.run).field_path : job.field;
  const FieldDefinition def = load_field_definition(field);
  std::ostringstream report;
  construct(def, report, field);
  write_file(job.out / "structure.txt", report.str());
  log_line(fmt::format("{}construct: wrote {}", job.label, (job.out / "structure.txt").string()));
}

void cmd_flow(const Job& job) {
  const RunConfig rc = load_run_config(job.run);
  const OTStructure ot = load_structure(job.out);
  const FlowModel model(ot, rc.flow);
  const TimeSeries ts = run(model, [&](const FlowState& st) {
    log_line(fmt::format("{}flow t={:g} steps={} dt={:.3g} lam_min={:.6g}", job.label, st.t, st.steps, st.dt_last,
                         st.lam_min));
  });
  std::ostringstream csv, state;
  write_csv(csv, ts.records);
  write_state(state, ts.final_state, rc.flow.N, model.d());
  write_file(job.out / "timeseries.csv", csv.str());
  write_file(job.out / "state.txt", state.str());
  log_line(fmt::format("{}flow: {} records to t={:g}", job.label, ts.records.size(), ts.final_state.t));
}

bool cmd_verify(const Job& job) {
  const RunConfig rc = load_run_config(job.run);
  const OTStructure ot = load_structure(job.out);
  const auto records = load_series(job.out);
  if (records.empty()) throw Error(ErrorCode::MissingInput, "time series has no records");
  const FlowModel model(ot, rc.flow);
  const fs::path sp = job.out / "state.txt";
  std::istringstream sin(read_file(sp, "state dump (run flow first)"));
  const FlowState state = read_state(sin, rc.flow.N, model.d(), sp.string());

  const BoundReport bounds = verify_bounds(records, rc.verify.bounds);
  const GHReport gh = collapse_report(model, records, state, rc.verify);
  const auto verdicts = collapse_verdicts(gh);

  std::ostringstream btxt, bcsv, gtxt, gcsv;
  write_bound_report(btxt, bounds);
  write_bound_csv(bcsv, bounds);
  write_gh_report(gtxt, gh);
  bool ok = bounds.all_pass();
  for (const auto& v : verdicts) {
    fmt::print(gtxt, "{} {}: {}\n", v.pass ? "PASS" : "FAIL", v.name, v.detail);
    ok = ok && v.pass;
  }
  write_gh_csv(gcsv, gh);
  write_file(job.out / "bounds.txt", btxt.str());
  write_file(job.out / "bounds.csv", bcsv.str());
  write_file(job.out / "collapse.txt", gtxt.str());
  write_file(job.out / "collapse.csv", gcsv.str());

  std::ostringstream summary;
  for (const auto& e : bounds.entries)
    fmt::print(summary, "{}{} {}: measured {:.6g}, threshold {:.6g}\n", job.label, e.pass ? "PASS" : "FAIL", e.name,
               e.measured, e.threshold);
  for (const auto& v : verdicts) fmt::print(summary, "{}{} {}: {}\n", job.label, v.pass ? "PASS" : "FAIL", v.name, v.detail);
  fmt::print(summary, "{}verdict: {}\n", job.label, ok ? "PASS" : "FAIL");
  {
    std::lock_guard<std::mutex> lock(io_mutex);
    std::cout << summary.str() << std::flush;
  }
  return ok;
}

void cmd_plot(const Job& job, const std::string& selection) {
  const RunConfig rc = load_run_config(job.run);
  const auto records = load_series(job.out);
  std::vector<PlotSpec> specs = rc.plots;
  if (!selection.empty()) {
    specs.clear();
    std::stringstream ss(selection);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      PlotSpec spec{name, true, {}};
      for (const auto& s : rc.plots)
        if (s.series == name) spec = s;
      series_column(records, name);
      specs.push_back(spec);
    }
  }
  std::vector<std::pair<fs::path, std::string>> files;
  for (const auto& spec : specs) {
    std::ostringstream svg;
    write_svg(svg, records, spec, rc.verify.bounds.window_start);
    files.push_back({job.out / "plots" / (spec.series + ".svg"), svg.str()});
  }
  for (const auto& [p, content] : files) write_file(p, content);
  log_line(fmt::format("{}plot: wrote {} files to {}", job.label, files.size(), (job.out / "plots").string()));
}

void set_workers() {
  const char* env = std::getenv("OTCRF_WORKERS");
  if (!env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 1 || n > 4096)
    throw Error(ErrorCode::ConfigError, fmt::format("OTCRF_WORKERS must be a positive integer, got '{}'", env));
  omp_set_num_threads(static_cast<int>(n));
}

int report_error(const std::string& label, ErrorCode code, const std::string& msg) {
  std::string line = msg;
  for (char& c : line)
    if (c == '\n') c = ' ';
  std::lock_guard<std::mutex> lock(io_mutex);
  std::cerr << "error[" << code_name(code) << "]: " << label << line << '\n';
  return 2;
}

int execute(const std::string& command, const Job& job, const std::string& plots) {
  try {
    if (command == "construct") {
      cmd_construct(job);
      return 0;
    }
    if (command == "flow") {
      cmd_flow(job);
      return 0;
    }
    if (command == "verify") return cmd_verify(job) ? 0 : 1;
    if (command == "plot") {
      cmd_plot(job, plots);
      return 0;
    }
    cmd_construct(job);
    cmd_flow(job);
    const bool ok = cmd_verify(job);
    cmd_plot(job, plots);
    return ok ? 0 : 1;
  } catch (const FlowDegenerateError& e) {
    return report_error(job.label, e.code(), fmt::format("{} (at flow time {:g})", e.what(), e.time()));
  } catch (const Error& e) {
    return report_error(job.label, e.code(), e.what());
  } catch (const std::exception& e) {
    return report_error(job.label, ErrorCode::IoError, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced Chern-Ricci flow on OT-manifolds: construct, flow, verify, plot"};
  app.require_subcommand(1, 1);
  Options opt;
  auto add = [&](const std::string& name, const std::string& help, bool field, bool plots) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (field) sub->add_option("--field", opt.field, "field definition file");
    sub->add_option("--run", opt.runs, "run file (repeat for several scenarios)");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    if (plots) sub->add_option("--plots", opt.plots, "comma separated series to plot");
    return sub;
  };
  add("construct", "build the OT structure and write its report", true, false);
  add("flow", "run the flow and write the time series", false, false);
  add("verify", "check the time series against the estimates", false, false);
  add("plot", "write SVG plots of the time series", false, true);
  add("all", "construct, flow, verify and plot", true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("", ErrorCode::ConfigError, e.what());
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    set_workers();
  } catch (const Error& e) {
    return report_error("", e.code(), e.what());
  }

  std::vector<Job> jobs;
  if (opt.runs.empty()) {
    if (command != "construct" || opt.field.empty())
      return report_error("", ErrorCode::ConfigError,
                          command == "construct" ? "construct needs --field or --run" : command + " needs --run");
    jobs.push_back({opt.field, "", opt.out, ""});
  } else if (opt.runs.size() == 1) {
    jobs.push_back({opt.field, opt.runs[0], opt.out, ""});
  } else {
    if (!opt.field.empty())
      return report_error("", ErrorCode::ConfigError, "--field cannot be combined with several run files");
    for (const auto& r : opt.runs) {
      std::string name;
      try {
        name = load_run_config(r).name;
      } catch (const Error& e) {
        return report_error("", e.code(), e.what());
      }
      jobs.push_back({"", r, fs::path(opt.out) / name, name + ": "});
    }
  }

  std::vector<int> codes(jobs.size(), 0);
  if (jobs.size() == 1) {
    codes[0] = execute(command, jobs[0], opt.plots);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < jobs.size(); ++k)
      threads.emplace_back([&, k] { codes[k] = execute(command, jobs[k], opt.plots); });
    for (auto& t : threads) t.join();
  }
  int worst = 0;
  for (int c : codes) worst = std::max(worst, c);
  return worst;
}
