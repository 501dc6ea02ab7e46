#pragma once

#include <stdexcept>
#include <string>

namespace tfuse {

// Out-of-range argument or inconsistent dimensions.
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Input that carries no usable information (constant map, rank deficiency).
class DegenerateInputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// API used out of contract: wrong disparity semantics, mismatched face, ...
class MisuseError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Evaluation outside the domain of a function (non-positive scale).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// Provider directory problem attributable to one face (or -1 for the whole set).
class ProviderError : public std::runtime_error {
public:
  ProviderError(int face, const std::string& what)
      : std::runtime_error(face >= 0 ? "face " + std::to_string(face) + ": " + what : what),
        face_(face) {}
  int face() const noexcept { return face_; }

private:
  int face_;
};

}  // namespace tfuse
