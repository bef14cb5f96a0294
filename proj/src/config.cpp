#include "owl/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace owl {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

void KvConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::parse, path + ":" + std::to_string(lineno) +
                                 ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": empty key");
    values_[key] = value;
  }
}

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get_string(const std::string& key, const std::string& dflt) const {
  auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

double KvConfig::get_double(const std::string& key, double dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "': expected number, got '" +
                                it->second + "'");
  }
}

int KvConfig::get_int(const std::string& key, int dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t pos = 0;
    int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "': expected integer, got '" +
                                it->second + "'");
  }
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "': expected unsigned integer");
  }
}

bool KvConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  fail(ErrorKind::config, "config key '" + key + "': expected true/false");
}

std::vector<double> KvConfig::get_doubles(const std::string& key,
                                          const std::vector<double>& dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  std::vector<double> out;
  for (const std::string& tok : split(it->second, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      fail(ErrorKind::config, "config key '" + key + "': bad number '" + tok + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::config, "config key '" + key + "': empty list");
  return out;
}

std::vector<std::string> KvConfig::get_strings(
    const std::string& key, const std::vector<std::string>& dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  std::vector<std::string> out;
  for (const std::string& tok : split(it->second, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::string KvConfig::canonical_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

uint64_t KvConfig::hash() const { return fnv1a64(canonical_text()); }

std::string RunConfig::meta_json() const {
  std::ostringstream hash_hex;
  hash_hex << std::hex << kv.hash();
  json j = {{"tool_version", kToolVersion},
            {"config_hash", hash_hex.str()},
            {"seed", seed}};
  return j.dump();
}

RunConfig build_run_config(const KvConfig& kv) {
  RunConfig rc;
  rc.kv = kv;
  rc.corpus_dir = kv.get_string("corpus_dir", "out/corpus");
  rc.out_dir = kv.get_string("out_dir", "out");
  rc.seed = kv.get_u64("seed", 1);

  SynthSpec& s = rc.synth;
  s.videos = kv.get_int("synth.videos", s.videos);
  s.visual_classes = kv.get_int("synth.visual_classes", s.visual_classes);
  s.audio_classes = kv.get_int("synth.audio_classes", s.audio_classes);
  s.context_groups = kv.get_int("synth.context_groups", s.context_groups);
  s.instances_per_video = kv.get_int("synth.instances_per_video", s.instances_per_video);
  s.feature_dim = kv.get_int("synth.feature_dim", s.feature_dim);
  s.fps = kv.get_double("synth.fps", s.fps);
  s.noise_sigma = kv.get_double("synth.noise_sigma", s.noise_sigma);
  s.amplitude = kv.get_double("synth.amplitude", s.amplitude);
  s.occlusion_rate = kv.get_double("synth.occlusion_rate", s.occlusion_rate);
  s.occ_low_share = kv.get_double("synth.occ_low_share", s.occ_low_share);
  s.occ_low_min = kv.get_double("synth.occ_low_min", s.occ_low_min);
  s.occ_low_max = kv.get_double("synth.occ_low_max", s.occ_low_max);
  s.occ_high_min = kv.get_double("synth.occ_high_min", s.occ_high_min);
  s.occ_high_max = kv.get_double("synth.occ_high_max", s.occ_high_max);
  s.dur_min = kv.get_double("synth.dur_min", s.dur_min);
  s.dur_max = kv.get_double("synth.dur_max", s.dur_max);
  s.gap_min = kv.get_double("synth.gap_min", s.gap_min);
  s.gap_max = kv.get_double("synth.gap_max", s.gap_max);
  std::string mode = kv.get_string("synth.taxonomy_mode", "single_action");
  if (mode == "verb_noun") {
    s.taxonomy_mode = TaxonomyMode::verb_noun;
  } else if (mode == "single_action") {
    s.taxonomy_mode = TaxonomyMode::single_action;
  } else {
    fail(ErrorKind::config, "synth.taxonomy_mode must be verb_noun or single_action");
  }

  TemConfig& t = rc.tem;
  t.modality = tem_modality_from_string(kv.get_string("tem.modality", "av"));
  t.window = kv.get_int("tem.window", t.window);
  t.stride = kv.get_int("tem.stride", t.stride);
  t.hidden = kv.get_int("tem.hidden", t.hidden);
  t.lr = kv.get_double("tem.lr", t.lr);
  t.epochs = kv.get_int("tem.epochs", t.epochs);
  t.seed = rc.seed;

  ProposalConfig& p = rc.prop;
  p.max_duration = kv.get_int("prop.max_duration", p.max_duration);
  p.nms_sigma = kv.get_double("prop.nms_sigma", p.nms_sigma);
  p.nms_floor = kv.get_double("prop.nms_floor", p.nms_floor);
  p.top_n = kv.get_int("prop.top_n", p.top_n);

  OwlConfig& o = rc.owl;
  o.d_model = kv.get_int("owl.d_model", o.d_model);
  o.heads = kv.get_int("owl.heads", o.heads);
  o.pos_dim = kv.get_int("owl.pos_dim", o.pos_dim);
  o.ff_dim = kv.get_int("owl.ff_dim", o.ff_dim);
  o.window = kv.get_int("owl.window", o.window);
  o.theta_pos = kv.get_double("owl.theta_pos", o.theta_pos);
  o.lr = kv.get_double("owl.lr", o.lr);
  o.epochs = kv.get_int("owl.epochs", o.epochs);
  o.top_actions = kv.get_int("owl.top_actions", o.top_actions);
  o.seed = rc.seed;

  FusionConfig& f = rc.fusion;
  f.strategy = fusion_strategy_from_string(kv.get_string("fusion.strategy", "early"));
  f.hidden = kv.get_int("fusion.hidden", f.hidden);
  f.lr = kv.get_double("fusion.lr", f.lr);
  f.epochs = kv.get_int("fusion.epochs", f.epochs);
  f.theta_pos = kv.get_double("fusion.theta_pos", f.theta_pos);
  f.top_actions = kv.get_int("fusion.top_actions", f.top_actions);
  f.seed = rc.seed;
  // Default supervision per strategy; fusion.supervision overrides.
  if (f.strategy == FusionStrategy::late_self_gate ||
      f.strategy == FusionStrategy::late_cross_gate) {
    f.sup_v = f.sup_a = true;
    f.sup_av = false;
  } else {
    f.sup_v = f.sup_a = false;
    f.sup_av = true;
  }
  if (kv.has("fusion.supervision")) {
    f.sup_v = f.sup_a = f.sup_av = false;
    for (const std::string& b : kv.get_strings("fusion.supervision", {})) {
      if (b == "v") {
        f.sup_v = true;
      } else if (b == "a") {
        f.sup_a = true;
      } else if (b == "av") {
        f.sup_av = true;
      } else {
        fail(ErrorKind::config, "fusion.supervision entries must be v, a or av");
      }
    }
  }

  EvalConfig& e = rc.eval;
  e.tious = kv.get_doubles("eval.tious", e.tious);
  e.occ_low = kv.get_double("eval.occ_low", e.occ_low);
  e.occ_high = kv.get_double("eval.occ_high", e.occ_high);
  for (size_t i = 0; i < e.tious.size(); ++i) {
    if (e.tious[i] <= 0.0 || e.tious[i] > 1.0)
      fail(ErrorKind::config, "eval.tious entries must be in (0,1]");
    if (i > 0 && e.tious[i] <= e.tious[i - 1])
      fail(ErrorKind::config, "eval.tious must be strictly increasing");
  }

  rc.classifier_kind = kv.get_string("classifier.kind", "owl");
  if (rc.classifier_kind != "owl" && rc.classifier_kind != "fusion")
    fail(ErrorKind::config, "classifier.kind must be owl or fusion");

  for (const std::string& w : kv.get_strings("ablate.windows", {"0", "2", "4", "8", "full"})) {
    if (w == "full") {
      rc.ablate_windows.push_back(-1);
    } else {
      try {
        rc.ablate_windows.push_back(std::stoi(w));
      } catch (const std::exception&) {
        fail(ErrorKind::config, "ablate.windows: bad entry '" + w + "'");
      }
    }
  }
  for (const std::string& sd : kv.get_strings("ablate.seeds", {"1", "2", "3"})) {
    try {
      rc.ablate_seeds.push_back(std::stoull(sd));
    } catch (const std::exception&) {
      fail(ErrorKind::config, "ablate.seeds: bad entry '" + sd + "'");
    }
  }
  return rc;
}

}  // namespace owl
