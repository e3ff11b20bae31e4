#pragma once

#include <stdexcept>
#include <string>

namespace nmq {

// Base of every error raised by the library. The category decides the CLI exit code.
class Error : public std::runtime_error {
public:
  enum class Category { Input, Numerical, Analysis };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

private:
  Category category_;
};

#define NMQ_DEFINE_ERROR(Name, Cat)                                  \
  class Name : public Error {                                        \
  public:                                                            \
    explicit Name(const std::string& what)                           \
        : Error(Category::Cat, std::string(#Name ": ") + what) {}    \
  };

NMQ_DEFINE_ERROR(InvalidArgument, Input)
NMQ_DEFINE_ERROR(EmptyTimes, Input)
NMQ_DEFINE_ERROR(GridMismatch, Input)
NMQ_DEFINE_ERROR(TooShort, Input)
NMQ_DEFINE_ERROR(FormatError, Input)
NMQ_DEFINE_ERROR(ConfigError, Input)
NMQ_DEFINE_ERROR(NonPhysical, Numerical)
NMQ_DEFINE_ERROR(DegenerateCoupling, Numerical)
NMQ_DEFINE_ERROR(StepTooLarge, Numerical)
NMQ_DEFINE_ERROR(TruncationOverflow, Numerical)
NMQ_DEFINE_ERROR(NoOscillations, Analysis)
NMQ_DEFINE_ERROR(NoPlateau, Analysis)

#undef NMQ_DEFINE_ERROR

}  // namespace nmq
