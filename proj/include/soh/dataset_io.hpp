#pragma once

#include <string>
#include <vector>

#include "soh/types.hpp"

namespace soh {

/// Column-name map for dataset CSV ingestion. Defaults match the files this
/// project writes; override when ingesting third-party exports.
struct DatasetSchema {
  std::string source_id = "source_id";
  std::string cycle = "cycle";
  std::string capacity = "capacity_ah";
  std::string voltage = "voltage_v";
  std::string temperature = "temperature_c";
  std::string c_rate = "c_rate";
  std::string soh = "soh";  // optional column; absent means unlabeled data
};

/// What ingestion did to each profile: rows merged at duplicate voltages,
/// rows dropped for breaking monotonicity, and outright rejections.
struct LoadReport {
  struct ProfileNote {
    std::string source_id;
    long cycle = 0;
    int merged_rows = 0;
    int dropped_rows = 0;
    bool rejected = false;
    std::string reason;
  };
  std::vector<ProfileNote> notes;
  int profiles_loaded = 0;
  int profiles_rejected = 0;
};

/// Loads and groups profiles by (source_id, cycle), in file order.
/// Duplicate-voltage samples collapse to the mean capacity at that voltage;
/// rows that still break monotonicity are dropped and reported. A profile
/// left with fewer than 8 samples is rejected with a note (not an error)
/// unless every profile is rejected, which throws ValidationError.
/// Missing declared columns throw ValidationError.
std::vector<QVProfile> load_dataset(const std::string& path, const DatasetSchema& schema = {},
                                    LoadReport* report = nullptr);

void save_dataset(const std::string& path, const std::vector<QVProfile>& profiles,
                  const DatasetSchema& schema = {});

/// Feature table CSV: source_id, cycle, one column per feature, then soh
/// when labels are present. The mask file mirrors the feature columns with
/// 0/1 availability flags.
void save_feature_table(const std::string& path, const FeatureTable& table);
void save_feature_mask(const std::string& path, const FeatureTable& table);
FeatureTable load_feature_table(const std::string& path, const std::string& mask_path = "");

}  // namespace soh
