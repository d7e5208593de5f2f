#pragma once

#include <stdexcept>
#include <string>

namespace nvscan {

/// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluation outside an operation's domain (e.g. a dipole field at the source).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Spectrum or surface fit could not be carried out.
class FitError : public Error {
 public:
  using Error::Error;
};

/// The tracked frequency lost the resonance during a scan.
class TrackingLoss : public Error {
 public:
  TrackingLoss(const std::string& what, int ix, int iy, double detuning_mhz)
      : Error(what), ix_(ix), iy_(iy), detuning_(detuning_mhz) {}

  int ix() const { return ix_; }
  int iy() const { return iy_; }
  double detuning() const { return detuning_; }

 private:
  int ix_;
  int iy_;
  double detuning_;
};

/// Malformed input file; the message carries the line or field at fault.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace nvscan
