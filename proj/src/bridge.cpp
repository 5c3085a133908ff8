#include "geolo/bridge.hpp"

#include <condition_variable>
#include <deque>
#include <istream>
#include <ostream>
#include <thread>
#include <vector>

namespace geolo {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

class MalformedRequest : public Error {
 public:
  using Error::Error;
};

template <int N>
Eigen::Matrix<double, N, 1> read_vector(const json& req, const char* key) {
  if (!req.contains(key) || !req.at(key).is_array() || req.at(key).size() != N) {
    throw MalformedRequest(std::string("'") + key + "' must be an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    const auto& e = req.at(key).at(static_cast<std::size_t>(i));
    if (!e.is_number()) throw MalformedRequest(std::string("'") + key + "' must contain only numbers");
    v[i] = e.get<double>();
  }
  return v;
}

std::string read_id(const json& req, const char* key) {
  if (!req.contains(key) || !req.at(key).is_string()) throw MalformedRequest(std::string("'") + key + "' must be a string");
  return req.at(key).get<std::string>();
}

ordered_json error_record(const json& request_id, const std::string& code, const std::string& message) {
  ordered_json out;
  out["request_id"] = request_id;
  out["error"] = {{"code", code}, {"message", message}};
  return out;
}

bool valid_scan_id(const std::string& id) {
  return !id.empty() && id.find('/') == std::string::npos && id.find('\\') == std::string::npos && id != "." &&
         id != "..";
}

}  // namespace

ScanDataset::ScanDataset(RunConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::shared_ptr<const ScanDataset::Entry> ScanDataset::load(const std::string& id) const {
  if (!valid_scan_id(id)) throw UnknownScanError("invalid scan id '" + id + "'");
  const auto scan_path = cfg_.dataset_root / (id + ".bin");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(scan_path, ec)) throw UnknownScanError("unknown scan id '" + id + "'");
  auto entry = std::make_shared<Entry>();
  entry->scan = load_kitti_bin(scan_path);
  const auto cache = cfg_.normals_path_for(id);
  if (std::filesystem::is_regular_file(cache, ec)) {
    entry->normals = load_normals(cache, cfg_.normals);
    if (entry->normals.size() != entry->scan.size()) {
      throw ValidationError(cache.string() + ": normals cache does not match scan '" + id + "'");
    }
  } else {
    entry->normals = compute_normals(entry->scan, project(entry->scan, cfg_.projection()), cfg_.normals);
  }
  return entry;
}

std::shared_ptr<const ScanDataset::Entry> ScanDataset::get(const std::string& id) {
  std::promise<std::shared_ptr<const Entry>> promise;
  std::shared_future<std::shared_ptr<const Entry>> future;
  bool loader = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(id);
    if (it != entries_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      entries_.emplace(id, future);
      loader = true;
    }
  }
  if (loader) {
    try {
      promise.set_value(load(id));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

std::shared_ptr<const SpatialIndex> ScanDataset::index(const std::string& id) {
  const auto entry = get(id);
  std::promise<std::shared_ptr<const SpatialIndex>> promise;
  std::shared_future<std::shared_ptr<const SpatialIndex>> future;
  bool builder = false;
  {
    std::lock_guard lock(mutex_);
    auto it = indices_.find(id);
    if (it != indices_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      indices_.emplace(id, future);
      builder = true;
    }
  }
  if (builder) {
    try {
      promise.set_value(build_index(entry->scan));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

ordered_json handle_request(const json& request, ScanDataset& dataset) {
  const json request_id = request.is_object() && request.contains("request_id") ? request.at("request_id") : json(nullptr);
  try {
    if (!request.is_object()) throw MalformedRequest("request must be a JSON object");
    if (!request.contains("request_id")) throw MalformedRequest("missing 'request_id'");
    const auto source_id = read_id(request, "source_scan_id");
    const auto target_id = read_id(request, "target_scan_id");
    const auto q = read_vector<4>(request, "q");
    const auto t = read_vector<3>(request, "t");

    LossOptions options = dataset.config().loss;
    std::optional<double> max_distance = dataset.config().bridge_max_distance;
    if (request.contains("lambda")) {
      if (!request.at("lambda").is_number()) throw MalformedRequest("'lambda' must be a number");
      options.lambda = request.at("lambda").get<double>();
    }
    if (request.contains("toggles")) {
      const auto& tg = request.at("toggles");
      if (!tg.is_object()) throw MalformedRequest("'toggles' must be an object");
      for (const auto& [key, value] : tg.items()) {
        if (!value.is_boolean()) throw MalformedRequest("toggle '" + key + "' must be a boolean");
        if (key == "p2n") {
          options.p2n = value.get<bool>();
        } else if (key == "n2n") {
          options.n2n = value.get<bool>();
        } else {
          throw MalformedRequest("unknown toggle '" + key + "'");
        }
      }
    }
    if (request.contains("max_distance")) {
      const auto& md = request.at("max_distance");
      if (md.is_null()) {
        max_distance.reset();
      } else if (md.is_number() && md.get<double>() > 0.0) {
        max_distance = md.get<double>();
      } else {
        throw MalformedRequest("'max_distance' must be a positive number or null");
      }
    }
    if (request.contains("strict_nk_denominator")) {
      if (!request.at("strict_nk_denominator").is_boolean()) throw MalformedRequest("'strict_nk_denominator' must be a boolean");
      options.strict_nk_denominator = request.at("strict_nk_denominator").get<bool>();
    }

    if (q.norm() < kMinQuaternionNorm<double>) throw DegenerateInputError("quaternion norm below 1e-12");
    const RelativeTransformd T(q, t);
    const auto source = dataset.get(source_id);
    const auto target = dataset.get(target_id);
    const auto index = dataset.index(target_id);
    const auto eval =
        evaluate_pair(source->scan, source->normals, target->scan, target->normals, *index, T, options, max_distance);

    const auto& loss = eval.result.loss;
    const auto& grad = eval.result.gradient;
    ordered_json out;
    out["request_id"] = request_id;
    out["loss_total"] = loss.total;
    out["loss_p2n"] = loss.l_p2n;
    out["loss_n2n"] = loss.l_n2n;
    out["grad_q"] = {grad.d_total_d_q[0], grad.d_total_d_q[1], grad.d_total_d_q[2], grad.d_total_d_q[3]};
    out["grad_t"] = {grad.d_total_d_t[0], grad.d_total_d_t[1], grad.d_total_d_t[2]};
    out["valid_pairs"] = loss.valid_pair_count;
    return out;
  } catch (const MalformedRequest& e) {
    return error_record(request_id, "malformed_request", e.what());
  } catch (const json::exception& e) {
    return error_record(request_id, "malformed_request", e.what());
  } catch (const UnknownScanError& e) {
    return error_record(request_id, "unknown_scan", e.what());
  } catch (const NoOverlapError& e) {
    return error_record(request_id, "no_overlap", e.what());
  } catch (const DegenerateInputError& e) {
    return error_record(request_id, "degenerate_input", e.what());
  } catch (const std::exception& e) {
    return error_record(request_id, "internal", e.what());
  }
}

std::string handle_request_line(const std::string& line, ScanDataset& dataset) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_record(nullptr, "malformed_request", e.what()).dump();
  }
  return handle_request(request, dataset).dump();
}

void run_bridge(std::istream& in, std::ostream& out, ScanDataset& dataset, unsigned workers) {
  std::mutex out_mutex;
  auto respond = [&](const std::string& line) {
    const auto response = handle_request_line(line, dataset);
    std::lock_guard lock(out_mutex);
    out << response << '\n';
    out.flush();
  };
  auto blank = [](const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; };

  if (workers <= 1) {
    std::string line;
    while (std::getline(in, line)) {
      if (!blank(line)) respond(line);
    }
    return;
  }

  std::mutex queue_mutex;
  std::condition_variable ready;
  std::deque<std::string> queue;
  bool done = false;
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::string line;
        {
          std::unique_lock lock(queue_mutex);
          ready.wait(lock, [&] { return done || !queue.empty(); });
          if (queue.empty()) return;
          line = std::move(queue.front());
          queue.pop_front();
        }
        respond(line);
      }
    });
  }
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    {
      std::lock_guard lock(queue_mutex);
      queue.push_back(std::move(line));
    }
    ready.notify_one();
  }
  {
    std::lock_guard lock(queue_mutex);
    done = true;
  }
  ready.notify_all();
}

}  // namespace geolo
