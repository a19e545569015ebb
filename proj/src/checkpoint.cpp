#include "spidernet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "spidernet/errors.hpp"
#include "spidernet/genotype.hpp"

namespace spidernet {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json weights_json(SupernetModel& model) {
  json blocks = json::object();
  for_each_block(model, [&blocks](const std::string& path, PrimitiveBlock& b) {
    json params = json::object();
    for (const Param& p : b.params) {
      const Shape& s = p.value.shape;
      params[p.name] = json{{"shape", {s.n, s.c, s.h, s.w}}, {"data", p.value.data}};
    }
    json bn = json::array();
    for (const BatchNormStats& st : b.bn) bn.push_back(json{{"mean", st.mean}, {"var", st.var}});
    blocks[path] = json{{"params", std::move(params)}, {"bn", std::move(bn)}};
  });
  return json{{"format", kWeightsFormat},
              {"genotype", to_genotype(model)},
              {"blocks", std::move(blocks)}};
}

SupernetModel model_from_weights(const json& j) {
  if (field<std::string>(j, "format") != kWeightsFormat) {
    throw FormatError("weights: unsupported format version (expected " +
                      std::string(kWeightsFormat) + ")");
  }
  std::mt19937_64 scratch(0);
  SupernetModel model = from_genotype(field<json>(j, "genotype"), scratch);
  const json blocks = field<json>(j, "blocks");
  for_each_block(model, [&blocks](const std::string& path, PrimitiveBlock& b) {
    if (!blocks.contains(path)) throw FormatError("weights: missing block " + path);
    const json& jb = blocks.at(path);
    const json params = field<json>(jb, "params");
    for (Param& p : b.params) {
      if (!params.contains(p.name)) {
        throw FormatError("weights: block " + path + " lacks tensor " + p.name);
      }
      const auto data = field<std::vector<double>>(params.at(p.name), "data");
      if (data.size() != p.value.size()) {
        throw FormatError("weights: tensor " + path + "/" + p.name + " has " +
                          std::to_string(data.size()) + " values, expected " +
                          std::to_string(p.value.size()));
      }
      p.value.data = data;
    }
    const json bn = field<json>(jb, "bn");
    if (bn.size() != b.bn.size()) throw FormatError("weights: BatchNorm count differs in " + path);
    for (std::size_t i = 0; i < b.bn.size(); ++i) {
      auto mean = field<std::vector<double>>(bn.at(i), "mean");
      auto var = field<std::vector<double>>(bn.at(i), "var");
      if (mean.size() != b.bn[i].mean.size() || var.size() != b.bn[i].var.size()) {
        throw FormatError("weights: BatchNorm width differs in " + path);
      }
      b.bn[i].mean = std::move(mean);
      b.bn[i].var = std::move(var);
    }
  });
  return model;
}

void write_atomic(const std::filesystem::path& path, std::string_view text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RunError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw RunError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RunError("cannot replace " + path.string() + ": " + ec.message());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json dataset_spec_json(const DatasetSpec& s) {
  return json{{"kind", s.kind == DatasetKind::kCifar10 ? "cifar10" : "synthetic"},
              {"path", s.path.string()},
              {"classes", s.classes},
              {"samples", s.samples},
              {"image_size", s.image_size},
              {"separation", s.separation},
              {"noise", s.noise},
              {"train_size", s.train_size},
              {"test_size", s.test_size},
              {"augmentation", json{{"random_crop", s.augmentation.random_crop},
                                    {"horizontal_flip", s.augmentation.horizontal_flip},
                                    {"cutout", s.augmentation.cutout},
                                    {"normalize", s.augmentation.normalize}}}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  const auto kind = field<std::string>(j, "kind");
  if (kind == "cifar10") {
    s.kind = DatasetKind::kCifar10;
  } else if (kind == "synthetic") {
    s.kind = DatasetKind::kSynthetic;
  } else {
    throw FormatError("dataset: unknown kind '" + kind + "'");
  }
  s.path = field<std::string>(j, "path");
  s.classes = field<int>(j, "classes");
  s.samples = field<std::size_t>(j, "samples");
  s.image_size = field<int>(j, "image_size");
  s.separation = field<double>(j, "separation");
  s.noise = field<double>(j, "noise");
  s.train_size = field<std::size_t>(j, "train_size");
  s.test_size = field<std::size_t>(j, "test_size");
  const json a = field<json>(j, "augmentation");
  s.augmentation.random_crop = field<bool>(a, "random_crop");
  s.augmentation.horizontal_flip = field<bool>(a, "horizontal_flip");
  s.augmentation.cutout = field<int>(a, "cutout");
  s.augmentation.normalize = field<bool>(a, "normalize");
  return s;
}

void RunDirectory::create() const {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw RunError("cannot create run directory " + root.string() + ": " + ec.message());
}

}  // namespace spidernet
