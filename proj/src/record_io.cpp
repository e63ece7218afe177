#include "fafed/record_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace fafed {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, std::size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  return v;
}

// JSON cannot hold inf/nan; store those as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  return fmt17(v);
}

double from_num(const json& j) {
  if (j.is_string()) return std::strtod(j.get<std::string>().c_str(), nullptr);
  return j.get<double>();
}

}  // namespace

void write_csv(std::ostream& os, const RunRecord& record) {
  os << kCsvHeader << '\n';
  for (const auto& r : record.rows) {
    os << r.t << ',' << fmt17(r.loss) << ',' << fmt17(r.grad_norm) << ','
       << fmt17(r.metric_mt) << ',' << fmt17(r.consensus_err) << ',' << r.samples << ','
       << r.comms << ',' << fmt17(r.wall_ms) << '\n';
  }
}

std::string to_csv(const RunRecord& record) {
  std::ostringstream os;
  write_csv(os, record);
  return os.str();
}

void write_csv_file(const std::string& path, const RunRecord& record) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(out, record);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

RunRecord read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw std::runtime_error("unexpected CSV header '" + line + "'");
  RunRecord record;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected 8 fields");
    RecordRow r;
    r.t = parse_int(f[0], line_no);
    r.loss = parse_double(f[1], line_no);
    r.grad_norm = parse_double(f[2], line_no);
    r.metric_mt = parse_double(f[3], line_no);
    r.consensus_err = parse_double(f[4], line_no);
    r.samples = parse_int(f[5], line_no);
    r.comms = parse_int(f[6], line_no);
    r.wall_ms = parse_double(f[7], line_no);
    record.rows.push_back(r);
  }
  return record;
}

RunRecord read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_csv(in);
}

std::string trace_to_json(const RunTrace& trace) {
  json j;
  j["algorithm"] = to_string(trace.algorithm);
  j["n_clients"] = trace.n_clients;
  j["dim"] = trace.dim;
  j["q"] = trace.q;
  j["rho"] = trace.rho;
  j["adaptive"] = trace.adaptive;
  j["precond_floor"] = trace.precond_floor;
  j["init_max_abs_grad"] = num(trace.init_max_abs_grad);
  j["init_samples"] = trace.init_samples;
  json steps = json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"t", s.t},
                     {"eta", num(s.eta)},
                     {"rho", num(s.rho)},
                     {"loss", num(s.loss)},
                     {"grad_norm", num(s.grad_norm)},
                     {"a_norm", num(s.a_norm)},
                     {"a_min", num(s.a_min)},
                     {"move_over_eta", num(s.move_over_eta)},
                     {"err_over_rho", num(s.err_over_rho)},
                     {"metric_mt", num(s.metric_mt)},
                     {"consensus", num(s.consensus)},
                     {"dispersion", num(s.dispersion)},
                     {"x_scale", num(s.x_scale)},
                     {"synced", s.synced},
                     {"a_changed", s.a_changed},
                     {"post_sync_dev_x", num(s.post_sync_dev_x)},
                     {"post_sync_dev_m", num(s.post_sync_dev_m)},
                     {"post_sync_dev_v", num(s.post_sync_dev_v)},
                     {"max_abs_grad", num(s.max_abs_grad)},
                     {"precond_max", num(s.precond_max)},
                     {"samples", s.samples},
                     {"comms", s.comms}});
  }
  j["steps"] = std::move(steps);
  return j.dump();
}

RunTrace trace_from_json(const std::string& text) {
  const json j = json::parse(text);
  RunTrace trace;
  trace.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  trace.n_clients = j.at("n_clients").get<std::size_t>();
  trace.dim = j.at("dim").get<std::size_t>();
  trace.q = j.at("q").get<int>();
  trace.rho = from_num(j.at("rho"));
  trace.adaptive = j.at("adaptive").get<bool>();
  trace.precond_floor = from_num(j.at("precond_floor"));
  trace.init_max_abs_grad = from_num(j.at("init_max_abs_grad"));
  trace.init_samples = j.at("init_samples").get<std::int64_t>();
  for (const auto& e : j.at("steps")) {
    StepTrace s;
    s.t = e.at("t").get<std::int64_t>();
    s.eta = from_num(e.at("eta"));
    s.rho = from_num(e.at("rho"));
    s.loss = from_num(e.at("loss"));
    s.grad_norm = from_num(e.at("grad_norm"));
    s.a_norm = from_num(e.at("a_norm"));
    s.a_min = from_num(e.at("a_min"));
    s.move_over_eta = from_num(e.at("move_over_eta"));
    s.err_over_rho = from_num(e.at("err_over_rho"));
    s.metric_mt = from_num(e.at("metric_mt"));
    s.consensus = from_num(e.at("consensus"));
    s.dispersion = from_num(e.at("dispersion"));
    s.x_scale = from_num(e.at("x_scale"));
    s.synced = e.at("synced").get<bool>();
    s.a_changed = e.at("a_changed").get<bool>();
    s.post_sync_dev_x = from_num(e.at("post_sync_dev_x"));
    s.post_sync_dev_m = from_num(e.at("post_sync_dev_m"));
    s.post_sync_dev_v = from_num(e.at("post_sync_dev_v"));
    s.max_abs_grad = from_num(e.at("max_abs_grad"));
    s.precond_max = from_num(e.at("precond_max"));
    s.samples = e.at("samples").get<std::int64_t>();
    s.comms = e.at("comms").get<std::int64_t>();
    trace.steps.push_back(s);
  }
  return trace;
}

void write_trace_file(const std::string& path, const RunTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << trace_to_json(trace) << '\n';
}

RunTrace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return trace_from_json(ss.str());
}

}  // namespace fafed
