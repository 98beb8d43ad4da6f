#include "pvmix/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "pvmix/errors.hpp"

namespace pvmix {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_int(long long v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void line_error(const std::string& path, std::size_t line,
                             const std::string& what) {
  throw DataError(path + ":" + fmt_int(static_cast<long long>(line)) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

bool parse_int_token(std::string_view tok, long long& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && !tok.empty();
}

bool parse_double_token(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && !tok.empty();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path);
  return in;
}

void write_comments(std::ofstream& out, const char* version_tag,
                    const std::vector<std::size_t>* dims,
                    const ConfigEcho& extra) {
  out << "# " << version_tag << "\n";
  if (dims != nullptr && !dims->empty()) {
    out << "# grid";
    for (std::size_t d : *dims) out << ',' << d;
    out << '\n';
  }
  for (const auto& [k, v] : extra) out << "# config," << k << '=' << v << '\n';
}

// Shared reader for the grid-indexed CSV formats. `value_cols` column labels
// follow the coordinate columns; rows land in `raw` and `values` (as text
// tokens handed to `on_value`).
struct GridCsv {
  std::vector<std::size_t> dims;  // empty when no grid comment was present
  int cv = 0;
  std::vector<int> raw;
  std::vector<std::string> value_tokens;
  std::vector<std::size_t> value_lines;  // source line per row
};

GridCsv read_grid_csv(const std::string& path, const std::string& value_col) {
  std::ifstream in = open_in(path);
  GridCsv doc;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::vector<long long> maxes;

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      if (sv.rfind("# grid,", 0) == 0) {
        if (header_seen) line_error(path, lineno, "grid comment after header");
        std::vector<std::string_view> toks = split_csv(sv.substr(2));
        doc.dims.clear();
        for (std::size_t i = 1; i < toks.size(); ++i) {
          long long d = 0;
          if (!parse_int_token(toks[i], d) || d < 1)
            line_error(path, lineno, "bad grid extent");
          doc.dims.push_back(static_cast<std::size_t>(d));
        }
        if (doc.dims.size() != 2 && doc.dims.size() != 3)
          line_error(path, lineno, "grid must be 2-D or 3-D");
      }
      continue;
    }
    if (!header_seen) {
      std::vector<std::string_view> cols = split_csv(sv);
      if (cols.size() == 3 && cols[0] == "x" && cols[1] == "y" && cols[2] == value_col) {
        doc.cv = 2;
      } else if (cols.size() == 4 && cols[0] == "x" && cols[1] == "y" &&
                 cols[2] == "z" && cols[3] == value_col) {
        doc.cv = 3;
      } else {
        line_error(path, lineno, "expected header x,y[,z]," + value_col);
      }
      if (!doc.dims.empty() &&
          doc.dims.size() != static_cast<std::size_t>(doc.cv))
        line_error(path, lineno, "grid comment does not match header dimensionality");
      header_seen = true;
      maxes.assign(static_cast<std::size_t>(doc.cv), -1);
      continue;
    }
    std::vector<std::string_view> toks = split_csv(sv);
    if (toks.size() != static_cast<std::size_t>(doc.cv) + 1)
      line_error(path, lineno, "expected " + fmt_int(doc.cv + 1) + " columns");
    for (int d = 0; d < doc.cv; ++d) {
      long long v = 0;
      if (!parse_int_token(toks[static_cast<std::size_t>(d)], v) || v < 0)
        line_error(path, lineno, "bad grid index");
      if (v > std::numeric_limits<int>::max())
        line_error(path, lineno, "grid index too large");
      maxes[static_cast<std::size_t>(d)] = std::max(maxes[static_cast<std::size_t>(d)], v);
      doc.raw.push_back(static_cast<int>(v));
    }
    doc.value_tokens.emplace_back(toks.back());
    doc.value_lines.push_back(lineno);
  }
  if (!header_seen) throw DataError(path + ": missing header row");
  if (doc.dims.empty())
    for (long long m : maxes) doc.dims.push_back(static_cast<std::size_t>(m + 1));
  return doc;
}

void theta_to_json(ordered_json& j, const MixtureParams& t) {
  j["k"] = t.K;
  j["cv"] = t.cv;
  j["delta"] = t.delta;
  j["eta"] = t.eta;
  j["pi"] = t.pi;
  ordered_json comps = ordered_json::array();
  for (const ComponentParams& c : t.comp) {
    ordered_json jc;
    jc["alpha"] = c.alpha;
    jc["beta"] = c.beta;
    jc["mu"] = std::vector<double>(c.mu.begin(), c.mu.begin() + t.cv);
    jc["sigma2"] = std::vector<double>(c.sigma2.begin(), c.sigma2.begin() + t.cv);
    comps.push_back(std::move(jc));
  }
  j["components"] = std::move(comps);
}

double json_num(const ordered_json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

MixtureParams theta_from_json(const ordered_json& j) {
  MixtureParams t;
  t.K = j.at("k").get<int>();
  t.cv = j.at("cv").get<int>();
  t.delta = json_num(j.at("delta"));
  t.eta = json_num(j.at("eta"));
  t.pi = j.at("pi").get<std::vector<double>>();
  t.comp.clear();
  for (const ordered_json& jc : j.at("components")) {
    ComponentParams c;
    c.alpha = json_num(jc.at("alpha"));
    c.beta = json_num(jc.at("beta"));
    std::vector<double> mu = jc.at("mu").get<std::vector<double>>();
    std::vector<double> s2 = jc.at("sigma2").get<std::vector<double>>();
    if (mu.size() != static_cast<std::size_t>(t.cv) ||
        s2.size() != static_cast<std::size_t>(t.cv))
      throw DataError("fit document: component axis count mismatch");
    for (std::size_t d = 0; d < mu.size(); ++d) {
      c.mu[d] = mu[d];
      c.sigma2[d] = s2[d];
    }
    t.comp.push_back(c);
  }
  if (t.pi.size() != t.comp.size())
    throw DataError("fit document: weight/component count mismatch");
  return t;
}

void require_no_comma(const std::string& s, const char* what) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
    throw DataError(std::string(what) + " must not contain commas or newlines");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string config_hash(const ConfigEcho& config) {
  std::uint64_t h = 14695981039346656037ull;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [k, v] : config) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

FieldDoc read_field_doc(const std::string& path) {
  GridCsv csv = read_grid_csv(path, "p");
  FieldDoc doc;
  std::vector<double> pvals(csv.value_tokens.size());
  for (std::size_t i = 0; i < csv.value_tokens.size(); ++i) {
    double v = 0.0;
    if (!parse_double_token(csv.value_tokens[i], v))
      line_error(path, csv.value_lines[i], "bad p-value");
    if (!(v >= 0.0) || !(v <= 1.0))
      line_error(path, csv.value_lines[i], "p-value outside [0, 1]");
    if (v < kPClamp || v > 1.0 - kPClamp) {
      doc.clamped_rows.push_back(i);
      doc.clamped_values.push_back(v);
    }
    pvals[i] = v;
  }
  doc.field = make_field(std::move(csv.raw), std::move(csv.dims), std::move(pvals));
  return doc;
}

PValueField read_field(const std::string& path) {
  return read_field_doc(path).field;
}

void write_field(const std::string& path, const FieldDoc& doc,
                 const ConfigEcho& extra) {
  const PValueField& f = doc.field;
  std::ofstream out = open_out(path);
  write_comments(out, "pvmix-field 1", &f.dims, extra);
  out << (f.cv == 2 ? "x,y,p" : "x,y,z,p") << '\n';
  for (std::size_t i = 0; i < f.n(); ++i) {
    const int* r = f.raw_row(i);
    for (int d = 0; d < f.cv; ++d) out << r[d] << ',';
    out << format_double(f.p[i]) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
  out.close();

  if (!doc.clamped_rows.empty()) {
    if (doc.clamped_rows.size() != doc.clamped_values.size())
      throw DataError("field document: clamp bookkeeping size mismatch");
    std::ofstream side = open_out(path + ".preclamp");
    side << "# pvmix-preclamp 1\nrow,p\n";
    for (std::size_t i = 0; i < doc.clamped_rows.size(); ++i)
      side << doc.clamped_rows[i] << ',' << format_double(doc.clamped_values[i]) << '\n';
    if (!side) throw DataError("write failed: " + path + ".preclamp");
  }
}

void write_field(const std::string& path, const PValueField& field,
                 const ConfigEcho& extra) {
  FieldDoc doc;
  doc.field = field;
  write_field(path, doc, extra);
}

std::array<unsigned char, 3> label_color(int label) {
  static constexpr std::array<std::array<unsigned char, 3>, 12> kPalette{{
      {230, 25, 75},    // red
      {60, 180, 75},    // green
      {255, 225, 25},   // yellow
      {0, 130, 200},    // blue
      {245, 130, 48},   // orange
      {145, 30, 180},   // purple
      {70, 240, 240},   // cyan
      {240, 50, 230},   // magenta
      {210, 245, 60},   // lime
      {250, 190, 212},  // pink
      {0, 128, 128},    // teal
      {220, 190, 255},  // lavender
  }};
  if (label <= 0) return {0, 0, 0};
  return kPalette[static_cast<std::size_t>(label - 1) % kPalette.size()];
}

void write_labelmap(const std::string& csv_path, const std::string& image_path,
                    const PValueField& field, const std::vector<int>& labels,
                    const ConfigEcho& extra) {
  if (labels.size() != field.n())
    throw DataError("labelmap: label count does not match field");

  std::ofstream out = open_out(csv_path);
  write_comments(out, "pvmix-labels 1", &field.dims, extra);
  out << (field.cv == 2 ? "x,y,label" : "x,y,z,label") << '\n';
  for (std::size_t i = 0; i < field.n(); ++i) {
    const int* r = field.raw_row(i);
    for (int d = 0; d < field.cv; ++d) out << r[d] << ',';
    out << labels[i] << '\n';
  }
  if (!out) throw DataError("write failed: " + csv_path);

  if (image_path.empty()) return;
  if (field.cv != 2)
    throw DataError("labelmap: image rendering requires a 2-D grid");
  const std::size_t w = field.dims[0], h = field.dims[1];
  std::vector<int> grid(w * h, 0);  // background renders as label 0
  for (std::size_t i = 0; i < field.n(); ++i) {
    const int* r = field.raw_row(i);
    grid[static_cast<std::size_t>(r[1]) * w + static_cast<std::size_t>(r[0])] =
        labels[i];
  }
  std::ofstream img = open_out(image_path);
  img << "P3\n" << w << ' ' << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::array<unsigned char, 3> c = label_color(grid[y * w + x]);
      img << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2])
          << (x + 1 == w ? '\n' : ' ');
    }
  }
  if (!img) throw DataError("write failed: " + image_path);
}

LabelMap read_labelmap(const std::string& path) {
  GridCsv csv = read_grid_csv(path, "label");
  LabelMap map;
  map.dims = std::move(csv.dims);
  map.raw = std::move(csv.raw);
  map.labels.resize(csv.value_tokens.size());
  for (std::size_t i = 0; i < csv.value_tokens.size(); ++i) {
    long long v = 0;
    if (!parse_int_token(csv.value_tokens[i], v) ||
        v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      line_error(path, csv.value_lines[i], "bad label");
    map.labels[i] = static_cast<int>(v);
  }
  return map;
}

void write_fit(const std::string& path, const FitDocument& doc) {
  ordered_json j;
  j["schema"] = doc.schema;
  j["seed"] = doc.seed;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : doc.config) cfg[k] = v;
  j["config"] = std::move(cfg);

  ordered_json sel;
  sel["criterion"] = doc.criterion;
  sel["k_hat"] = doc.k_hat;
  ordered_json per_k = ordered_json::array();
  for (const SelectionEntry& e : doc.selection) {
    ordered_json je;
    je["k"] = e.K;
    je["valid"] = e.valid;
    je["converged"] = e.converged;
    je["n_iter"] = e.n_iter;
    je["loglik"] = e.loglik;
    je["aic"] = e.aic;
    je["bic"] = e.bic;
    je["iclbic"] = e.iclbic;
    per_k.push_back(std::move(je));
  }
  sel["per_k"] = std::move(per_k);
  j["selection"] = std::move(sel);

  ordered_json theta;
  theta_to_json(theta, doc.theta);
  j["theta"] = std::move(theta);

  if (doc.merged) {
    ordered_json m;
    m["method"] = doc.merge_method;
    m["q0"] = doc.q0;
    m["k_final"] = doc.k_final;
    ordered_json s1 = ordered_json::array();
    for (const ComponentTest& t : doc.stage1) {
      ordered_json jt;
      jt["component"] = t.k;
      jt["n"] = t.n_k;
      jt["lambda"] = t.lambda;
      jt["p"] = t.p;
      jt["q"] = t.q;
      jt["keep"] = t.keep;
      s1.push_back(std::move(jt));
    }
    m["stage1"] = std::move(s1);
    ordered_json s2 = ordered_json::array();
    for (const PairTest& t : doc.stage2) {
      ordered_json jt;
      jt["a"] = t.k;
      jt["b"] = t.l;
      jt["lambda"] = t.lambda;
      jt["p"] = t.p;
      jt["q"] = t.q;
      jt["merge"] = t.merge;
      jt["retested"] = t.retested;
      s2.push_back(std::move(jt));
    }
    m["stage2"] = std::move(s2);
    m["relabel"] = doc.relabel;
    ordered_json tf;
    theta_to_json(tf, doc.theta_final);
    m["theta"] = std::move(tf);
    j["merge"] = std::move(m);
  }

  ordered_json counts;
  counts["records"] = doc.n_records;
  counts["active"] = doc.n_active;
  j["counts"] = std::move(counts);

  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

FitDocument read_fit(const std::string& path) {
  std::ifstream in = open_in(path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  FitDocument doc;
  try {
    doc.schema = j.at("schema").get<std::string>();
    if (doc.schema.rfind("pvmix-fit/", 0) != 0)
      throw DataError("unrecognized fit schema: " + doc.schema);
    doc.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items())
      doc.config.emplace_back(k, v.get<std::string>());
    const ordered_json& sel = j.at("selection");
    doc.criterion = sel.at("criterion").get<std::string>();
    doc.k_hat = sel.at("k_hat").get<int>();
    for (const ordered_json& je : sel.at("per_k")) {
      SelectionEntry e;
      e.K = je.at("k").get<int>();
      e.valid = je.at("valid").get<bool>();
      e.converged = je.at("converged").get<bool>();
      e.n_iter = je.at("n_iter").get<int>();
      e.loglik = json_num(je.at("loglik"));
      e.aic = json_num(je.at("aic"));
      e.bic = json_num(je.at("bic"));
      e.iclbic = json_num(je.at("iclbic"));
      doc.selection.push_back(e);
    }
    doc.theta = theta_from_json(j.at("theta"));
    if (j.contains("merge")) {
      doc.merged = true;
      const ordered_json& m = j.at("merge");
      doc.merge_method = m.at("method").get<std::string>();
      doc.q0 = json_num(m.at("q0"));
      doc.k_final = m.at("k_final").get<int>();
      for (const ordered_json& jt : m.at("stage1")) {
        ComponentTest t;
        t.k = jt.at("component").get<int>();
        t.n_k = jt.at("n").get<std::size_t>();
        t.lambda = json_num(jt.at("lambda"));
        t.p = json_num(jt.at("p"));
        t.q = json_num(jt.at("q"));
        t.keep = jt.at("keep").get<bool>();
        doc.stage1.push_back(t);
      }
      for (const ordered_json& jt : m.at("stage2")) {
        PairTest t;
        t.k = jt.at("a").get<int>();
        t.l = jt.at("b").get<int>();
        t.lambda = json_num(jt.at("lambda"));
        t.p = json_num(jt.at("p"));
        t.q = json_num(jt.at("q"));
        t.merge = jt.at("merge").get<bool>();
        t.retested = jt.at("retested").get<bool>();
        doc.stage2.push_back(t);
      }
      doc.relabel = m.at("relabel").get<std::vector<int>>();
      doc.theta_final = theta_from_json(m.at("theta"));
    }
    doc.n_records = j.at("counts").at("records").get<std::size_t>();
    doc.n_active = j.at("counts").at("active").get<std::size_t>();
  } catch (const ordered_json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return doc;
}

void write_results(const std::string& path, const std::vector<ResultRow>& rows,
                   const ConfigEcho& extra) {
  std::ofstream out = open_out(path);
  write_comments(out, "pvmix-results 1", nullptr, extra);
  out << "method,omega,delta,phantom,replicate,jaccard\n";
  for (const ResultRow& r : rows) {
    require_no_comma(r.method, "method name");
    require_no_comma(r.phantom, "phantom name");
    out << r.method << ',' << format_double(r.omega) << ',' << format_double(r.delta)
        << ',' << r.phantom << ',' << r.replicate << ','
        << format_double(r.jaccard) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    std::vector<std::string_view> toks = split_csv(sv);
    if (!header_seen) {
      if (toks.size() != 6 || toks[0] != "method" || toks[1] != "omega" ||
          toks[2] != "delta" || toks[3] != "phantom" || toks[4] != "replicate" ||
          toks[5] != "jaccard")
        line_error(path, lineno,
                   "expected header method,omega,delta,phantom,replicate,jaccard");
      header_seen = true;
      continue;
    }
    if (toks.size() != 6) line_error(path, lineno, "expected 6 columns");
    ResultRow r;
    r.method = std::string(toks[0]);
    long long rep = 0;
    if (!parse_double_token(toks[1], r.omega) ||
        !parse_double_token(toks[2], r.delta))
      line_error(path, lineno, "bad omega or delta");
    r.phantom = std::string(toks[3]);
    if (!parse_int_token(toks[4], rep)) line_error(path, lineno, "bad replicate");
    r.replicate = static_cast<int>(rep);
    if (!parse_double_token(toks[5], r.jaccard) || !(r.jaccard >= 0.0) ||
        !(r.jaccard <= 1.0))
      line_error(path, lineno, "bad jaccard value");
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw DataError(path + ": missing header row");
  return rows;
}

void write_table(const std::string& path, const std::vector<EvalCell>& cells,
                 const ConfigEcho& extra) {
  std::ofstream out = open_out(path);
  write_comments(out, "pvmix-table 1", nullptr, extra);
  out << "phantom,method,omega,delta,n,median,iqr\n";
  for (const EvalCell& c : cells) {
    require_no_comma(c.method, "method name");
    require_no_comma(c.phantom, "phantom name");
    out << c.phantom << ',' << c.method << ',' << format_double(c.omega) << ','
        << format_double(c.delta) << ',' << c.n << ',' << format_double(c.median)
        << ',' << format_double(c.iqr) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace pvmix
