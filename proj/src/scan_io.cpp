#include "geolo/scan_io.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace geolo {

namespace {

static_assert(std::endian::native == std::endian::little, "KITTI binary IO assumes a little-endian host");

constexpr double kOrthonormalDrift = 1e-6;

void append_number(std::string& out, double value) {
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  out.append(buf.data(), res.ptr);
}

bool parse_number(std::string_view token, double& value) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(value);
}

}  // namespace

PointCloudScan PointCloudScan::from_points(const Eigen::Ref<const Matrix3X<double>>& raw, std::string id) {
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(raw.cols()));
  for (Eigen::Index i = 0; i < raw.cols(); ++i) {
    const auto p = raw.col(i);
    if (p.allFinite() && p.squaredNorm() > 0.0) keep.push_back(i);
  }
  PointCloudScan scan;
  scan.source_id = std::move(id);
  scan.points.resize(3, static_cast<Eigen::Index>(keep.size()));
  scan.ranges.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    scan.points.col(col) = raw.col(keep[k]);
    scan.ranges[col] = scan.points.col(col).norm();
  }
  return scan;
}

PoseRecord PoseRecord::from_transform(const RelativeTransformd& T, std::size_t frame_index) {
  return PoseRecord{T.rotation(), T.t(), frame_index};
}

PointCloudScan load_kitti_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scan file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  if (bytes.size() % 16 != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % 16;
    throw FormatError(path.string() + ": truncated point record at byte offset " + std::to_string(offset) + " (file length " +
                      std::to_string(bytes.size()) + " is not a multiple of 16)");
  }
  const std::size_t count = bytes.size() / 16;
  Matrix3X<double> raw(3, static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::array<float, 4> rec{};
    std::memcpy(rec.data(), bytes.data() + i * 16, 16);
    raw.col(static_cast<Eigen::Index>(i)) << rec[0], rec[1], rec[2];
  }
  return PointCloudScan::from_points(raw, path.stem().string());
}

void save_kitti_bin(const PointCloudScan& scan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write scan file " + path.string());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto p = scan.point(i);
    const std::array<float, 4> rec{static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), 0.0f};
    out.write(reinterpret_cast<const char*>(rec.data()), 16);
  }
  if (!out) throw IoError("write failure on " + path.string());
}

std::string format_pose_line(const PoseRecord& pose) {
  std::string line;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!line.empty()) line.push_back(' ');
      append_number(line, c < 3 ? pose.rotation(r, c) : pose.translation[r]);
    }
  }
  return line;
}

void write_trajectory(const std::vector<PoseRecord>& poses, const std::filesystem::path& path) {
  if (poses.empty()) throw InvalidArgument("write_trajectory: empty pose list");
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (poses[i].frame_index != i) {
      throw InvalidArgument("write_trajectory: frame indices must be contiguous from 0 (index " + std::to_string(i) +
                            " holds frame " + std::to_string(poses[i].frame_index) + ")");
    }
  }
  std::string text;
  for (const auto& pose : poses) {
    text += format_pose_line(pose);
    text.push_back('\n');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write trajectory " + path.string());
  out << text;
  if (!out) throw IoError("write failure on " + path.string());
}

TrajectoryReadResult read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory " + path.string());
  TrajectoryReadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::array<double, 12> values{};
    std::size_t count = 0;
    std::istringstream tokens(line);
    std::string token;
    while (tokens >> token) {
      if (count == values.size()) {
        ++count;
        break;
      }
      if (!parse_number(token, values[count])) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": unparseable value '" + token + "'");
      }
      ++count;
    }
    if (count != 12) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 12 values, found " +
                        (count > 12 ? std::string("more") : std::to_string(count)));
    }

    PoseRecord pose;
    pose.frame_index = result.poses.size();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
      pose.translation[r] = values[static_cast<std::size_t>(r * 4 + 3)];
    }
    const double det = pose.rotation.determinant();
    if (!(det > 0.0)) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": rotation determinant " + std::to_string(det) +
                            " is not positive");
    }
    const double drift = (pose.rotation.transpose() * pose.rotation - Matrix3<double>::Identity()).cwiseAbs().maxCoeff();
    if (drift > kOrthonormalDrift || std::abs(det - 1.0) > kOrthonormalDrift) {
      Eigen::JacobiSVD<Matrix3<double>> svd(pose.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
      pose.rotation = svd.matrixU() * svd.matrixV().transpose();
      result.reorthonormalized.push_back(pose.frame_index);
    }
    result.poses.push_back(pose);
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return result;
}

std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a readable directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace geolo
