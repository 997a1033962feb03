#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include "flowguard/ensemble.hpp"

namespace flowguard {

inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFileError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, DigestMismatch, Malformed };

  ModelFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(ModelFileError::Kind kind);

/// Binary model file; layout in docs/model-format.md.
void save_ensemble(std::ostream& out, const TrainedEnsemble& ensemble);
TrainedEnsemble load_ensemble(std::istream& in);

/// Writes to a sibling temporary file and renames it into place.
void save_ensemble(const std::string& path, const TrainedEnsemble& ensemble);
TrainedEnsemble load_ensemble(const std::string& path);

}  // namespace flowguard
