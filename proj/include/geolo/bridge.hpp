#pragma once

#include <filesystem>
#include <future>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "geolo/alignment.hpp"
#include "geolo/config.hpp"

namespace geolo {

/// Scans and normals resolved by scan id (file stem) under a dataset root,
/// loaded once and shared. Target KD-trees are memoized by scan id.
///
/// Normals come from `<normals_dir>/<id>.normals` when present, otherwise
/// they are computed with the configured projection and parameters.
class ScanDataset {
 public:
  struct Entry {
    PointCloudScan scan;
    NormalField normals;
  };

  explicit ScanDataset(RunConfig cfg);

  std::shared_ptr<const Entry> get(const std::string& id);
  std::shared_ptr<const SpatialIndex> index(const std::string& id);
  const RunConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const Entry> load(const std::string& id) const;

  RunConfig cfg_;
  std::mutex mutex_;
  std::map<std::string, std::shared_future<std::shared_ptr<const Entry>>> entries_;
  std::map<std::string, std::shared_future<std::shared_ptr<const SpatialIndex>>> indices_;
};

/// Raised for ids that do not name a scan in the dataset.
class UnknownScanError : public Error {
 public:
  using Error::Error;
};

// Line protocol, one JSON object per line in each direction.
//
// request:  {"request_id": <any>, "source_scan_id": str, "target_scan_id": str,
//            "q": [w, x, y, z], "t": [x, y, z],
//            "lambda": num (default 1), "toggles": {"p2n": bool, "n2n": bool},
//            "max_distance": num | null (optional), "strict_nk_denominator": bool (optional)}
// response: {"request_id", "loss_total", "loss_p2n", "loss_n2n",
//            "grad_q": [4], "grad_t": [3], "valid_pairs"}
// error:    {"request_id": <echo or null>, "error": {"code": str, "message": str}}
//           with code one of malformed_request, unknown_scan, no_overlap, degenerate_input, internal
nlohmann::ordered_json handle_request(const nlohmann::json& request, ScanDataset& dataset);
std::string handle_request_line(const std::string& line, ScanDataset& dataset);

/// Serves requests from `in` until EOF. With more than one worker responses
/// may be written out of order; each is flushed as a whole line.
void run_bridge(std::istream& in, std::ostream& out, ScanDataset& dataset, unsigned workers);

}  // namespace geolo
