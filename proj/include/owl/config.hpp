#pragma once

#include <map>
#include <string>
#include <vector>

#include "owl/evaltal.hpp"
#include "owl/featstore.hpp"
#include "owl/fusion.hpp"
#include "owl/owl_model.hpp"
#include "owl/proposals.hpp"

namespace owl {

// Flat key = value config file; '#' starts a comment. Flags override file
// entries, file entries override defaults.
class KvConfig {
 public:
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  uint64_t get_u64(const std::string& key, uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& dflt) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& dflt) const;

  // Sorted key=value lines; hashed into every artifact's meta block.
  std::string canonical_text() const;
  uint64_t hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct RunConfig {
  KvConfig kv;
  std::string corpus_dir;
  std::string out_dir;
  uint64_t seed = 1;

  SynthSpec synth;
  TemConfig tem;
  ProposalConfig prop;
  OwlConfig owl;
  FusionConfig fusion;
  EvalConfig eval;
  std::string classifier_kind = "owl";  // owl | fusion
  std::vector<int> ablate_windows;      // -1 = full
  std::vector<uint64_t> ablate_seeds;

  // JSON meta block {tool_version, config_hash, seed} embedded in artifacts.
  std::string meta_json() const;
};

RunConfig build_run_config(const KvConfig& kv);

}  // namespace owl
