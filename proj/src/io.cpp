// Copyright 2026 The detcal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "detcal/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

namespace detcal::io {
namespace {

using nlohmann::json;

// Line of every object/array element and every member, keyed by JSON
// pointer ("/annotations/3", "/annotations/3/bbox").
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) { scan(text); }

  // Falls back to the closest indexed ancestor.
  int line_of(std::string pointer) const {
    for (;;) {
      auto it = lines_.find(pointer);
      if (it != lines_.end()) return it->second;
      const auto slash = pointer.rfind('/');
      if (slash == std::string::npos) return 1;
      pointer.resize(slash);
    }
  }

 private:
  struct Frame {
    bool array;
    std::size_t index = 0;
    std::string path;
    std::string key;
    bool expect_key = true;
  };

  void scan(const std::string& text) {
    std::vector<Frame> stack;
    int line = 1;
    auto child_path = [&]() -> std::string {
      if (stack.empty()) return "";
      const Frame& f = stack.back();
      return f.array ? f.path + "/" + std::to_string(f.index) : f.path + "/" + f.key;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char ch = text[i];
      if (ch == '\n') {
        ++line;
        continue;
      }
      if (ch == '"') {
        std::string s;
        for (++i; i < text.size() && text[i] != '"'; ++i) {
          if (text[i] == '\\' && i + 1 < text.size()) ++i;
          s.push_back(text[i]);
        }
        if (!stack.empty() && !stack.back().array && stack.back().expect_key) {
          stack.back().key = s;
        }
        continue;
      }
      if (ch == '{' || ch == '[') {
        std::string path = child_path();
        lines_.emplace(path, line);
        stack.push_back({ch == '[', 0, std::move(path), {}, true});
      } else if (ch == '}' || ch == ']') {
        if (!stack.empty()) stack.pop_back();
      } else if (ch == ',') {
        if (!stack.empty()) {
          if (stack.back().array) {
            ++stack.back().index;
          } else {
            stack.back().expect_key = true;
          }
        }
      } else if (ch == ':') {
        if (!stack.empty()) {
          stack.back().expect_key = false;
          lines_.emplace(child_path(), line);
        }
      }
    }
  }

  std::map<std::string, int> lines_;
};

int line_at_byte(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 +
         static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(origin + ":" + std::to_string(line_at_byte(text, e.byte)) +
                      ": invalid JSON: " + e.what());
  }
}

class Context {
 public:
  Context(const std::string& text, std::string origin) : index_(text), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& msg) const {
    throw FormatError(origin_ + ":" + std::to_string(index_.line_of(pointer)) + ": " +
                      (pointer.empty() ? std::string("/") : pointer) + ": " + msg);
  }

  const json& field(const json& obj, const std::string& pointer, const char* key) const {
    if (!obj.is_object()) fail(pointer, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(pointer, std::string("missing required field '") + key + "'");
    return *it;
  }

  std::int64_t integer(const json& obj, const std::string& pointer, const char* key) const {
    const json& v = field(obj, pointer, key);
    if (!v.is_number_integer())
      fail(pointer + "/" + key, std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
  }

  double number(const json& obj, const std::string& pointer, const char* key) const {
    const json& v = field(obj, pointer, key);
    if (!v.is_number())
      fail(pointer + "/" + key, std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
      fail(pointer + "/" + key, std::string("field '") + key + "' must be finite");
    return d;
  }

  std::array<double, 4> bbox(const json& obj, const std::string& pointer) const {
    const json& v = field(obj, pointer, "bbox");
    if (!v.is_array() || v.size() != 4)
      fail(pointer + "/bbox", "bbox must be an array [x, y, w, h]");
    std::array<double, 4> b{};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!v[i].is_number()) fail(pointer + "/bbox", "bbox entries must be numbers");
      b[i] = v[i].get<double>();
      if (!std::isfinite(b[i])) fail(pointer + "/bbox", "bbox entries must be finite");
    }
    if (!(b[2] > 0.0 && b[3] > 0.0))
      fail(pointer + "/bbox", "bbox width and height must be positive");
    return b;
  }

  const json& array(const json& obj, const std::string& pointer, const char* key) const {
    const json& v = field(obj, pointer, key);
    if (!v.is_array())
      fail(pointer + "/" + key, std::string("field '") + key + "' must be an array");
    return v;
  }

 private:
  LineIndex index_;
  std::string origin_;
};

std::string csv_value(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? format_number(*v) : std::string("null");
}

json matrix_json(const char* name, const double* data, Eigen::Index rows, Eigen::Index cols) {
  return json{{"name", name},
              {"shape", {rows, cols}},
              {"data", std::vector<double>(data, data + rows * cols)}};
}

}  // namespace

int GroundTruthFile::label_of(std::int64_t category_id) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].id == category_id) return static_cast<int>(i);
  }
  return -1;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ":0: cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<DetectionRecord> parse_detections(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  const Context ctx(text, origin);
  if (!doc.is_array()) ctx.fail("", "detections file must be a JSON array");
  std::vector<DetectionRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string ptr = "/" + std::to_string(i);
    const json& e = doc[i];
    DetectionRecord r;
    r.image_id = ctx.integer(e, ptr, "image_id");
    r.category_id = ctx.integer(e, ptr, "category_id");
    r.bbox = ctx.bbox(e, ptr);
    r.score = ctx.number(e, ptr, "score");
    if (r.score < 0.0 || r.score > 1.0) ctx.fail(ptr + "/score", "score must lie in [0, 1]");
    if (auto it = e.find("logits"); it != e.end() && !it->is_null()) {
      if (!it->is_array()) ctx.fail(ptr + "/logits", "logits must be an array of numbers");
      std::vector<double> z;
      for (const auto& v : *it) {
        if (!v.is_number()) ctx.fail(ptr + "/logits", "logits must be an array of numbers");
        z.push_back(v.get<double>());
      }
      r.logits = std::move(z);
    }
    out.push_back(std::move(r));
  }
  return out;
}

GroundTruthFile parse_ground_truth(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  const Context ctx(text, origin);
  if (!doc.is_object()) ctx.fail("", "ground-truth file must be a JSON object");
  GroundTruthFile gt;

  const json& cats = ctx.array(doc, "", "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string ptr = "/categories/" + std::to_string(i);
    Category c;
    c.id = ctx.integer(cats[i], ptr, "id");
    const json& name = ctx.field(cats[i], ptr, "name");
    if (!name.is_string()) ctx.fail(ptr + "/name", "field 'name' must be a string");
    c.name = name.get<std::string>();
    if (gt.label_of(c.id) >= 0) ctx.fail(ptr, "duplicate category id " + std::to_string(c.id));
    gt.categories.push_back(std::move(c));
  }

  const json& images = ctx.array(doc, "", "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string ptr = "/images/" + std::to_string(i);
    ImageInfo im;
    im.id = ctx.integer(images[i], ptr, "id");
    im.width = ctx.number(images[i], ptr, "width");
    im.height = ctx.number(images[i], ptr, "height");
    if (!(im.width > 0.0 && im.height > 0.0))
      ctx.fail(ptr + "/width", "image width and height must be positive");
    if (!gt.images.emplace(im.id, im).second)
      ctx.fail(ptr, "duplicate image id " + std::to_string(im.id));
  }

  const json& anns = ctx.array(doc, "", "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string ptr = "/annotations/" + std::to_string(i);
    GroundTruthObject obj;
    obj.id = ctx.integer(anns[i], ptr, "id");
    obj.image_id = ctx.integer(anns[i], ptr, "image_id");
    const std::int64_t cat = ctx.integer(anns[i], ptr, "category_id");
    const auto bbox = ctx.bbox(anns[i], ptr);
    auto im = gt.images.find(obj.image_id);
    if (im == gt.images.end())
      ctx.fail(ptr + "/image_id", "image_id " + std::to_string(obj.image_id) + " does not resolve");
    obj.label = gt.label_of(cat);
    if (obj.label < 0)
      ctx.fail(ptr + "/category_id",
               "category_id " + std::to_string(cat) + " is not a listed category");
    try {
      obj.box = normalize_box(bbox, im->second.width, im->second.height);
    } catch (const std::invalid_argument& e) {
      ctx.fail(ptr, e.what());
    }
    gt.objects.push_back(obj);
  }
  return gt;
}

std::vector<DetectionRecord> load_detections(const std::filesystem::path& path) {
  return parse_detections(read_text(path), path.string());
}

GroundTruthFile load_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_text(path), path.string());
}

NormBox normalize_box(const std::array<double, 4>& bbox, double width, double height) {
  const double x1 = std::clamp(bbox[0], 0.0, width);
  const double y1 = std::clamp(bbox[1], 0.0, height);
  const double x2 = std::clamp(bbox[0] + bbox[2], 0.0, width);
  const double y2 = std::clamp(bbox[1] + bbox[3], 0.0, height);
  if (!(x2 > x1 && y2 > y1)) throw std::invalid_argument("box lies outside its image");
  NormBox b{(x1 + x2) / (2.0 * width), (y1 + y2) / (2.0 * height), (x2 - x1) / width,
            (y2 - y1) / height};
  check_box(b);
  return b;
}

std::array<double, 4> denormalize_box(const NormBox& box, double width, double height) {
  return {box.x1() * width, box.y1() * height, box.w * width, box.h * height};
}

std::vector<Detection> to_detections(std::span<const DetectionRecord> records,
                                     const GroundTruthFile& gt, const std::string& origin) {
  std::vector<Detection> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DetectionRecord& r = records[i];
    auto fail = [&](const std::string& msg) {
      throw FormatError(origin + ": detection " + std::to_string(i) + ": " + msg);
    };
    auto im = gt.images.find(r.image_id);
    if (im == gt.images.end())
      fail("image_id " + std::to_string(r.image_id) + " not in ground truth");
    Detection d;
    d.image_id = r.image_id;
    d.label = gt.label_of(r.category_id);
    if (d.label < 0) {
      fail("category_id " + std::to_string(r.category_id) + " outside the " +
           std::to_string(gt.num_classes()) + " ground-truth categories");
    }
    d.score = r.score;
    try {
      d.box = normalize_box(r.bbox, im->second.width, im->second.height);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    d.logits = r.logits;
    out.push_back(std::move(d));
  }
  return out;
}

std::string dump_detections(std::span<const Detection> dets, const GroundTruthFile& gt) {
  json arr = json::array();
  for (const Detection& d : dets) {
    const ImageInfo& im = gt.images.at(d.image_id);
    const auto b = denormalize_box(d.box, im.width, im.height);
    json e{{"image_id", d.image_id},
           {"category_id", gt.categories.at(static_cast<std::size_t>(d.label)).id},
           {"bbox", b},
           {"score", d.score}};
    if (d.logits) e["logits"] = *d.logits;
    arr.push_back(std::move(e));
  }
  return arr.dump(1) + "\n";
}

std::string report_json(const CalibrationReport& report) {
  json dims = json::array();
  for (Dim d : report.grid.dims()) dims.push_back(std::string(to_string(d)));
  json bins = json::array();
  for (const BinStats& b : report.bins) {
    bins.push_back(
        {{"index", b.index}, {"count", b.count}, {"conf", b.conf()}, {"prec", b.prec()}});
  }
  json doc{{"dece", report.dece},
           {"ece", report.ece},
           {"n_detections", report.n_detections},
           {"iou_threshold", report.iou_threshold},
           {"dims", dims},
           {"bins", bins}};
  return doc.dump(2) + "\n";
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string reliability_csv(std::span<const ReliabilityRow> rows) {
  std::string out = "bin_center,conf,acc,count\n";
  for (const auto& r : rows) {
    out += format_number(r.bin_center) + "," + csv_value(r.conf) + "," + csv_value(r.acc) + "," +
           std::to_string(r.count) + "\n";
  }
  return out;
}

std::string histogram_csv(const ConfidenceHistogram& h) {
  std::string out = "bin_center,count,avg_confidence,avg_precision\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out += format_number(h.bin_centers[i]) + "," + std::to_string(h.counts[i]) + "," +
           format_number(h.avg_confidence) + "," + format_number(h.avg_precision) + "\n";
  }
  return out;
}

std::string curve_csv(std::span<const CurveRow> rows) {
  std::string out = "bin_center,prec,conf,count,partial_dece\n";
  for (const auto& r : rows) {
    out += format_number(r.bin_center) + "," + csv_value(r.prec) + "," + csv_value(r.conf) + "," +
           std::to_string(r.count) + "," + format_number(r.partial_dece) + "\n";
  }
  return out;
}

std::string heatmap_csv(const Heatmap& h) {
  std::string out = "row,col,value\n";
  for (Eigen::Index r = 0; r < h.gap.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.gap.cols(); ++c) {
      out += std::to_string(r) + "," + std::to_string(c) + "," +
             csv_value(h.count(r, c) > 0 ? std::optional<double>(h.gap(r, c)) : std::nullopt) +
             "\n";
    }
  }
  return out;
}

std::string checkpoint_json(const ToyDetector& model, const TrainConfig& config) {
  const ModelConfig& m = model.config();
  const auto& p = model.params();
  json cfg{{"mode", to_string(config.mode)},
           {"epochs", config.epochs},
           {"batch_size", config.batch_size},
           {"learning_rate", config.learning_rate},
           {"beta", config.beta},
           {"mc_passes", config.mc_passes},
           {"dropout", config.dropout},
           {"lambda_reg", config.lambda_reg},
           {"seed", config.seed},
           {"score_threshold", config.score_threshold},
           {"conf_bins", config.conf_bins},
           {"property_bins", config.property_bins},
           {"model",
            {{"grid", m.grid},
             {"channels", m.channels},
             {"num_classes", m.num_classes},
             {"patch_radius", m.patch_radius},
             {"hidden", m.hidden},
             {"max_box_side", m.max_box_side},
             {"offset_range", m.offset_range}}}};
  json params = json::array();
  params.push_back(matrix_json("trunk_w", p.trunk_w.data(), p.trunk_w.rows(), p.trunk_w.cols()));
  params.push_back(matrix_json("trunk_b", p.trunk_b.data(), p.trunk_b.rows(), 1));
  params.push_back(matrix_json("cls_w", p.cls_w.data(), p.cls_w.rows(), p.cls_w.cols()));
  params.push_back(matrix_json("cls_b", p.cls_b.data(), p.cls_b.rows(), 1));
  params.push_back(matrix_json("box_w", p.box_w.data(), p.box_w.rows(), p.box_w.cols()));
  params.push_back(matrix_json("box_b", p.box_b.data(), p.box_b.rows(), 1));
  json doc{{"format", "detcal-toydet-v1"}, {"config", cfg}, {"parameters", params}};
  return doc.dump(1) + "\n";
}

ToyDetector load_checkpoint(const std::string& text, const std::string& origin,
                            TrainConfig* config) {
  const json doc = parse_json(text, origin);
  const Context ctx(text, origin);
  if (!doc.is_object() || doc.value("format", "") != "detcal-toydet-v1") {
    ctx.fail("", "not a detcal-toydet-v1 checkpoint");
  }
  const json& cfg = ctx.field(doc, "", "config");
  const json& mj = ctx.field(cfg, "/config", "model");
  ModelConfig m;
  m.grid = static_cast<int>(ctx.integer(mj, "/config/model", "grid"));
  m.channels = static_cast<int>(ctx.integer(mj, "/config/model", "channels"));
  m.num_classes = static_cast<int>(ctx.integer(mj, "/config/model", "num_classes"));
  m.patch_radius = static_cast<int>(ctx.integer(mj, "/config/model", "patch_radius"));
  m.hidden = static_cast<int>(ctx.integer(mj, "/config/model", "hidden"));
  m.max_box_side = ctx.number(mj, "/config/model", "max_box_side");
  m.offset_range = ctx.number(mj, "/config/model", "offset_range");
  if (config != nullptr) {
    TrainConfig& c = *config;
    const json& mode = ctx.field(cfg, "/config", "mode");
    if (!mode.is_string()) ctx.fail("/config", "field 'mode' must be a string");
    c.mode = parse_train_mode(mode.get<std::string>());
    c.epochs = static_cast<int>(ctx.integer(cfg, "/config", "epochs"));
    c.batch_size = static_cast<int>(ctx.integer(cfg, "/config", "batch_size"));
    c.learning_rate = ctx.number(cfg, "/config", "learning_rate");
    c.beta = ctx.number(cfg, "/config", "beta");
    c.mc_passes = static_cast<int>(ctx.integer(cfg, "/config", "mc_passes"));
    c.dropout = ctx.number(cfg, "/config", "dropout");
    c.lambda_reg = ctx.number(cfg, "/config", "lambda_reg");
    c.seed = ctx.field(cfg, "/config", "seed").get<std::uint64_t>();
    c.score_threshold = ctx.number(cfg, "/config", "score_threshold");
    c.conf_bins = static_cast<int>(ctx.integer(cfg, "/config", "conf_bins"));
    c.property_bins = static_cast<int>(ctx.integer(cfg, "/config", "property_bins"));
    c.model = m;
  }
  ToyDetector model(m, 0);
  const json& params = ctx.array(doc, "", "parameters");
  std::vector<double> flat;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string ptr = "/parameters/" + std::to_string(i);
    const json& data = ctx.array(params[i], ptr, "data");
    for (const auto& v : data) {
      if (!v.is_number()) ctx.fail(ptr, "parameter data must be numbers");
      flat.push_back(v.get<double>());
    }
  }
  try {
    model.unflatten(flat);
  } catch (const std::invalid_argument& e) {
    ctx.fail("/parameters", e.what());
  }
  return model;
}

std::string train_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,task_loss,l_mcc,l_lc,dece,ap50\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + csv_value(r.task_loss) + "," + csv_value(r.l_mcc) + "," +
           csv_value(r.l_lc) + "," + csv_value(r.dece) + "," + csv_value(r.ap50) + "\n";
  }
  return out;
}

std::string temperature_json(double temperature) {
  return json{{"temperature", temperature}}.dump() + "\n";
}

double parse_temperature(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  const Context ctx(text, origin);
  const double t = ctx.number(doc, "", "temperature");
  if (!(t > 0.0)) ctx.fail("", "temperature must be positive");
  return t;
}

Eigen::MatrixXd parse_logits(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  const Context ctx(text, origin);
  if (!doc.is_array() || doc.empty())
    ctx.fail("", "logits file must be a non-empty array of arrays");
  const std::size_t k = doc[0].is_array() ? doc[0].size() : 0;
  if (k < 2) ctx.fail("/0", "each logit vector needs at least two entries");
  Eigen::MatrixXd z(static_cast<Eigen::Index>(doc.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string ptr = "/" + std::to_string(i);
    if (!doc[i].is_array() || doc[i].size() != k) {
      ctx.fail(ptr, "expected an array of " + std::to_string(k) + " numbers");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!doc[i][j].is_number()) ctx.fail(ptr, "logits must be numbers");
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = doc[i][j].get<double>();
    }
  }
  return z;
}

std::vector<int> parse_labels(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  const Context ctx(text, origin);
  if (!doc.is_array()) ctx.fail("", "labels file must be an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number_integer())
      ctx.fail("", "label " + std::to_string(i) + " is not an integer");
    out.push_back(doc[i].get<int>());
  }
  return out;
}

GroundTruthFile scenes_ground_truth(std::span<const SyntheticScene> scenes, int num_classes,
                                    double cell_pixels) {
  GroundTruthFile gt;
  for (int k = 0; k < num_classes; ++k)
    gt.categories.push_back({k + 1, "class" + std::to_string(k)});
  std::int64_t next_id = 1;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const double side = scenes[i].grid * cell_pixels;
    const auto id = static_cast<ImageId>(i);
    gt.images.emplace(id, ImageInfo{id, side, side});
    for (GroundTruthObject obj : scenes[i].objects) {
      obj.image_id = id;
      obj.id = next_id++;
      gt.objects.push_back(obj);
    }
  }
  return gt;
}

std::string dump_ground_truth(const GroundTruthFile& gt) {
  json images = json::array();
  for (const auto& [id, im] : gt.images) {
    images.push_back({{"id", id}, {"width", im.width}, {"height", im.height}});
  }
  json anns = json::array();
  for (const auto& obj : gt.objects) {
    const ImageInfo& im = gt.images.at(obj.image_id);
    anns.push_back({{"id", obj.id},
                    {"image_id", obj.image_id},
                    {"category_id", gt.categories.at(static_cast<std::size_t>(obj.label)).id},
                    {"bbox", denormalize_box(obj.box, im.width, im.height)}});
  }
  json cats = json::array();
  for (const auto& c : gt.categories) cats.push_back({{"id", c.id}, {"name", c.name}});
  return json{{"images", images}, {"annotations", anns}, {"categories", cats}}.dump(1) + "\n";
}

}  // namespace detcal::io
