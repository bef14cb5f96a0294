#include "owl/common.hpp"

namespace owl {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::mask: return "mask";
    case ErrorKind::label: return "label";
    case ErrorKind::config: return "config";
    case ErrorKind::segment: return "segment";
    case ErrorKind::duration: return "duration";
    case ErrorKind::parse: return "parse";
    case ErrorKind::spec: return "spec";
    case ErrorKind::data: return "data";
    case ErrorKind::plan: return "plan";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::ordering: return "ordering";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::join: return "join";
    case ErrorKind::metadata: return "metadata";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace owl
