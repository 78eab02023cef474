#pragma once

#include <stdexcept>
#include <string>

namespace d2tpt {

// Base of every error the engine raises. Catch this at process boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A vector whose L2 norm is at or below kNormEpsilon was asked to be
// normalized.
class DegenerateVector : public Error {
 public:
  using Error::Error;
};

class NotADistribution : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class EmptyKnowledgeBase : public Error {
 public:
  using Error::Error;
};

class BundleCorrupt : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public BundleCorrupt {
 public:
  using BundleCorrupt::BundleCorrupt;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace d2tpt
