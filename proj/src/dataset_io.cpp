#include "soh/dataset_io.hpp"

#include <fstream>
#include <map>

#include "soh/csv.hpp"
#include "soh/errors.hpp"

namespace soh {

namespace {

int require_column(const csv::Table& t, const std::string& name, const std::string& path) {
  const int j = t.column(name);
  if (j < 0) throw ValidationError("missing column '" + name + "' in " + path);
  return j;
}

struct RawRow {
  double q, v;
};

// Collapse duplicate voltages to mean capacity, then drop rows that break
// strict voltage increase or capacity non-decrease.
std::pair<std::vector<RawRow>, std::pair<int, int>> clean_rows(const std::vector<RawRow>& in) {
  std::vector<RawRow> merged;
  int n_merged = 0;
  for (const auto& r : in) {
    if (!merged.empty() && merged.back().v == r.v) {
      auto& last = merged.back();
      last.q = (last.q + r.q) / 2.0;  // running mean over the duplicate pair
      ++n_merged;
    } else {
      merged.push_back(r);
    }
  }
  std::vector<RawRow> out;
  int n_dropped = 0;
  for (const auto& r : merged) {
    if (!out.empty() && (r.v <= out.back().v || r.q < out.back().q)) {
      ++n_dropped;
      continue;
    }
    out.push_back(r);
  }
  return {std::move(out), {n_merged, n_dropped}};
}

}  // namespace

std::vector<QVProfile> load_dataset(const std::string& path, const DatasetSchema& schema,
                                    LoadReport* report) {
  const csv::Table t = csv::read(path);
  const int c_src = require_column(t, schema.source_id, path);
  const int c_cyc = require_column(t, schema.cycle, path);
  const int c_q = require_column(t, schema.capacity, path);
  const int c_v = require_column(t, schema.voltage, path);
  const int c_temp = require_column(t, schema.temperature, path);
  const int c_rate = require_column(t, schema.c_rate, path);
  const int c_soh = t.column(schema.soh);  // optional

  struct Group {
    std::vector<RawRow> rows;
    double temperature = 0, c_rate = 0;
    std::optional<double> soh;
  };
  // Keyed by (source_id, cycle); insertion order preserved for output.
  std::map<std::pair<std::string, long>, Group> groups;
  std::vector<std::pair<std::string, long>> order;

  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    if (row.size() < t.header.size())
      throw ValidationError(path + ": row " + std::to_string(i + 2) + " has too few fields");
    const std::string ctx = path + " row " + std::to_string(i + 2);
    std::pair<std::string, long> key{row[static_cast<std::size_t>(c_src)],
                                     csv::parse_long(row[static_cast<std::size_t>(c_cyc)], ctx)};
    auto it = groups.find(key);
    if (it == groups.end()) {
      it = groups.emplace(key, Group{}).first;
      order.push_back(key);
      it->second.temperature = csv::parse_double(row[static_cast<std::size_t>(c_temp)], ctx);
      it->second.c_rate = csv::parse_double(row[static_cast<std::size_t>(c_rate)], ctx);
      if (c_soh >= 0) it->second.soh = csv::parse_double(row[static_cast<std::size_t>(c_soh)], ctx);
    }
    it->second.rows.push_back({csv::parse_double(row[static_cast<std::size_t>(c_q)], ctx),
                               csv::parse_double(row[static_cast<std::size_t>(c_v)], ctx)});
  }

  std::vector<QVProfile> profiles;
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  for (const auto& key : order) {
    const Group& g = groups[key];
    auto [rows, counts] = clean_rows(g.rows);
    LoadReport::ProfileNote note;
    note.source_id = key.first;
    note.cycle = key.second;
    note.merged_rows = counts.first;
    note.dropped_rows = counts.second;
    if (rows.size() < 8) {
      note.rejected = true;
      note.reason = "profile too short after cleaning: " + std::to_string(rows.size()) + " samples";
      ++rep.profiles_rejected;
      rep.notes.push_back(note);
      continue;
    }
    QVProfile p;
    p.source_id = key.first;
    p.cycle = key.second;
    p.temperature_c = g.temperature;
    p.c_rate = g.c_rate;
    p.soh_label = g.soh;
    p.capacity_ah.resize(static_cast<Eigen::Index>(rows.size()));
    p.voltage_v.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      p.capacity_ah[static_cast<Eigen::Index>(i)] = rows[i].q;
      p.voltage_v[static_cast<Eigen::Index>(i)] = rows[i].v;
    }
    validate_profile(p);
    profiles.push_back(std::move(p));
    ++rep.profiles_loaded;
    if (note.merged_rows || note.dropped_rows) rep.notes.push_back(note);
  }
  if (profiles.empty())
    throw ValidationError(path + ": no usable profiles (" + std::to_string(rep.profiles_rejected) +
                          " rejected)");
  return profiles;
}

void save_dataset(const std::string& path, const std::vector<QVProfile>& profiles,
                  const DatasetSchema& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const bool labeled = !profiles.empty() && profiles.front().soh_label.has_value();
  std::vector<std::string> header{schema.source_id, schema.cycle,       schema.capacity,
                                  schema.voltage,   schema.temperature, schema.c_rate};
  if (labeled) header.push_back(schema.soh);
  out << csv::join(header) << '\n';
  for (const auto& p : profiles) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      std::vector<std::string> row{p.source_id,
                                   std::to_string(p.cycle),
                                   csv::format(p.capacity_ah[i]),
                                   csv::format(p.voltage_v[i]),
                                   csv::format(p.temperature_c),
                                   csv::format(p.c_rate)};
      if (labeled) row.push_back(csv::format(p.soh_label.value()));
      out << csv::join(row) << '\n';
    }
  }
}

void save_feature_table(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  std::vector<std::string> header{"source_id", "cycle"};
  header.insert(header.end(), table.feature_names.begin(), table.feature_names.end());
  if (table.has_labels) header.push_back("soh");
  out << csv::join(header) << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    std::vector<std::string> row;
    if (!table.row_ids.empty()) {
      row.push_back(table.row_ids[static_cast<std::size_t>(i)].source_id);
      row.push_back(std::to_string(table.row_ids[static_cast<std::size_t>(i)].cycle));
    } else {
      row.push_back("row" + std::to_string(i));
      row.push_back("0");
    }
    for (Eigen::Index j = 0; j < table.cols(); ++j) row.push_back(csv::format(table.values(i, j)));
    if (table.has_labels) row.push_back(csv::format(table.labels[i]));
    out << csv::join(row) << '\n';
  }
}

void save_feature_mask(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  std::vector<std::string> header{"source_id", "cycle"};
  header.insert(header.end(), table.feature_names.begin(), table.feature_names.end());
  out << csv::join(header) << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    std::vector<std::string> row;
    if (!table.row_ids.empty()) {
      row.push_back(table.row_ids[static_cast<std::size_t>(i)].source_id);
      row.push_back(std::to_string(table.row_ids[static_cast<std::size_t>(i)].cycle));
    } else {
      row.push_back("row" + std::to_string(i));
      row.push_back("0");
    }
    for (Eigen::Index j = 0; j < table.cols(); ++j) row.push_back(table.mask(i, j) ? "1" : "0");
    out << csv::join(row) << '\n';
  }
}

FeatureTable load_feature_table(const std::string& path, const std::string& mask_path) {
  const csv::Table t = csv::read(path);
  const int c_src = require_column(t, "source_id", path);
  const int c_cyc = require_column(t, "cycle", path);
  const int c_soh = t.column("soh");

  std::vector<std::string> names;
  std::vector<int> feature_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const int jj = static_cast<int>(j);
    if (jj == c_src || jj == c_cyc || jj == c_soh) continue;
    names.push_back(t.header[j]);
    feature_cols.push_back(jj);
  }

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd labels(c_soh >= 0 ? n : 0);
  std::vector<RowId> ids;
  ids.reserve(t.rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    if (row.size() < t.header.size())
      throw ValidationError(path + ": row " + std::to_string(i + 2) + " has too few fields");
    const std::string ctx = path + " row " + std::to_string(i + 2);
    ids.push_back({row[static_cast<std::size_t>(c_src)],
                   csv::parse_long(row[static_cast<std::size_t>(c_cyc)], ctx)});
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      values(i, static_cast<Eigen::Index>(j)) =
          csv::parse_double(row[static_cast<std::size_t>(feature_cols[j])], ctx);
    if (c_soh >= 0) labels[i] = csv::parse_double(row[static_cast<std::size_t>(c_soh)], ctx);
  }

  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  if (!mask_path.empty()) {
    const csv::Table m = csv::read(mask_path);
    mask.resize(n, static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
      const int mj = m.column(names[j]);
      if (mj < 0) throw ValidationError("mask file " + mask_path + " missing column " + names[j]);
      for (Eigen::Index i = 0; i < n; ++i)
        mask(i, static_cast<Eigen::Index>(j)) =
            m.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(mj)] != "0";
    }
  }

  return make_feature_table(std::move(names), std::move(values),
                            c_soh >= 0 ? std::optional<Eigen::VectorXd>(labels) : std::nullopt,
                            std::move(ids), std::move(mask));
}

}  // namespace soh
