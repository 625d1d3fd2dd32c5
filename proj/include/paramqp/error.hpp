#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paramqp {

// Root of the library's exception hierarchy. Every recoverable failure thrown
// by paramqp derives from this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class SymbolError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Well-formed JSON that does not follow the problem-file schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class DcpError : public Error {
 public:
  using Error::Error;
};

class DppError : public Error {
 public:
  using Error::Error;
};

// Problem passes DCP/DPP but uses an atom combination the QP reductions cannot express.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class CodegenError : public Error {
 public:
  using Error::Error;
};

}  // namespace paramqp
