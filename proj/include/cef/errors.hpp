#pragma once

#include <stdexcept>
#include <string>

namespace cef {

/// Base of every error raised by the library. `category()` drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { usage, data, numeric, contract };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

#define CEF_DEFINE_ERROR(Name, Cat)                                       \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(Category::Cat, what) {} \
  };

CEF_DEFINE_ERROR(UsageError, usage)
CEF_DEFINE_ERROR(DimensionError, data)
CEF_DEFINE_ERROR(ParameterError, data)
CEF_DEFINE_ERROR(LabelError, data)
CEF_DEFINE_ERROR(AlignmentError, data)
CEF_DEFINE_ERROR(FormatError, data)
CEF_DEFINE_ERROR(CorruptionError, data)
CEF_DEFINE_ERROR(IoError, data)
CEF_DEFINE_ERROR(ManifestError, data)
CEF_DEFINE_ERROR(DataError, data)
CEF_DEFINE_ERROR(CoverageError, data)
CEF_DEFINE_ERROR(NumericError, numeric)
CEF_DEFINE_ERROR(ContractError, contract)

#undef CEF_DEFINE_ERROR

}  // namespace cef
