#include "memos/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "memos/errors.hpp"

namespace memos {

namespace fs = std::filesystem;
using nlohmann::json;

void save_manifest(const fs::path& root, const DatasetManifest& m) {
  m.taxonomy.validate();
  json j;
  j["classes"] = json::array();
  for (size_t i = 0; i < m.taxonomy.class_ids.size(); ++i)
    j["classes"].push_back({{"id", m.taxonomy.class_ids[i]},
                            {"name", m.taxonomy.class_names[i]}});
  j["ignore_id"] = m.taxonomy.ignore_id;
  j["ood_id"] = m.taxonomy.ood_id;
  j["splits"] = json::object();
  for (const auto& [name, ids] : m.splits) j["splits"][name] = ids;
  j["seed"] = m.seed;
  if (!m.provenance.empty()) j["provenance"] = m.provenance;

  fs::create_directories(root);
  std::ofstream out(root / "manifest.json");
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path p = root / "manifest.json";
  std::ifstream in(p);
  if (!in) throw LoadError("manifest not found: " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError("manifest parse error in " + p.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    for (const auto& c : j.at("classes")) {
      m.taxonomy.class_ids.push_back(c.at("id").get<int>());
      m.taxonomy.class_names.push_back(c.at("name").get<std::string>());
    }
    m.taxonomy.ignore_id = j.at("ignore_id").get<int>();
    m.taxonomy.ood_id = j.value("ood_id", 254);
    for (const auto& [name, ids] : j.at("splits").items())
      m.splits[name] = ids.get<std::vector<std::string>>();
    m.seed = j.value("seed", 0ULL);
    m.provenance = j.value("provenance", "");
  } catch (const json::exception& e) {
    throw LoadError("manifest schema error in " + p.string() + ": " + e.what());
  }
  m.taxonomy.validate();
  return m;
}

void save_sample(const fs::path& root, const std::string& split, const LabeledImage& s) {
  write_png(root / "images" / split / (s.id + ".png"), s.image);
  write_png(root / "labels" / split / (s.id + ".png"), s.labels);
  if (s.ood) write_png(root / "ood_labels" / split / (s.id + ".png"), *s.ood);
}

namespace {

// Checks one sample against the taxonomy; appends human-readable violations.
void check_sample(const LabeledImage& s, const ClassTaxonomy& tax,
                  std::vector<std::string>* out) {
  if (s.image.h != s.labels.h || s.image.w != s.labels.w) {
    out->push_back("sample " + s.id + ": image/label size mismatch (" +
                   std::to_string(s.image.h) + "x" + std::to_string(s.image.w) + " vs " +
                   std::to_string(s.labels.h) + "x" + std::to_string(s.labels.w) + ")");
    return;
  }
  for (uint8_t v : s.labels.v) {
    if (v != tax.ignore_id && !tax.contains(v)) {
      out->push_back("sample " + s.id + ": label value " + std::to_string(int(v)) +
                     " outside taxonomy");
      break;
    }
  }
  if (s.ood) {
    if (s.ood->h != s.labels.h || s.ood->w != s.labels.w) {
      out->push_back("sample " + s.id + ": ood map size mismatch");
    } else {
      for (uint8_t v : s.ood->v) {
        if (v != 0 && v != 1 && v != tax.ignore_id) {
          out->push_back("sample " + s.id + ": ood value " + std::to_string(int(v)) +
                         " not in {0,1,ignore}");
          break;
        }
      }
    }
  }
}

LabeledImage load_sample(const fs::path& root, const std::string& split,
                         const std::string& id) {
  LabeledImage s;
  s.id = id;
  const fs::path img = root / "images" / split / (id + ".png");
  const fs::path lab = root / "labels" / split / (id + ".png");
  if (!fs::exists(img)) throw LoadError("sample " + id + ": missing image file " + img.string());
  if (!fs::exists(lab)) throw LoadError("sample " + id + ": missing label file " + lab.string());
  s.image = read_png_rgb(img);
  s.labels = read_png_gray(lab);
  const fs::path ood = root / "ood_labels" / split / (id + ".png");
  if (fs::exists(ood)) s.ood = read_png_gray(ood);
  return s;
}

}  // namespace

std::vector<LabeledImage> load_dataset(const fs::path& root, const std::string& split) {
  DatasetManifest m = load_manifest(root);
  auto it = m.splits.find(split);
  if (it == m.splits.end()) throw LoadError("split not in manifest: " + split);

  std::vector<std::string> ids = it->second;
  std::sort(ids.begin(), ids.end());

  std::vector<LabeledImage> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    LabeledImage s = load_sample(root, split, id);
    std::vector<std::string> violations;
    check_sample(s, m.taxonomy, &violations);
    if (!violations.empty()) throw ValidationError(violations.front());
    out.push_back(std::move(s));
  }
  return out;
}

ValidationReport validate_dataset(const fs::path& root) {
  ValidationReport report;
  DatasetManifest m;
  try {
    m = load_manifest(root);
  } catch (const Error& e) {
    report.violations.push_back(std::string("manifest: ") + e.what());
    return report;
  }
  for (const auto& [split, ids] : m.splits) {
    for (const auto& id : ids) {
      try {
        LabeledImage s = load_sample(root, split, id);
        check_sample(s, m.taxonomy, &report.violations);
      } catch (const Error& e) {
        report.violations.push_back(e.what());
      }
    }
  }
  return report;
}

}  // namespace memos
