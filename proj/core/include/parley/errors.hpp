#pragma once

#include <stdexcept>
#include <string>

namespace parley {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// game construction / dynamics
class OrderingViolation : public Error { public: using Error::Error; };
class IndexOutOfRange : public Error { public: using Error::Error; };
class InvalidPeriod : public Error { public: using Error::Error; };
class SteppedTerminalGame : public Error { public: using Error::Error; };

// equilibrium
class DegenerateGame : public Error { public: using Error::Error; };
class UnsupportedVariant : public Error { public: using Error::Error; };

// protocol / agents
class BackendFailure : public Error { public: using Error::Error; };
class UnparseableNoDefault : public Error { public: using Error::Error; };
class Timeout : public Error { public: using Error::Error; };
class MalformedResponse : public Error { public: using Error::Error; };
class ExhaustedScript : public Error { public: using Error::Error; };

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// memory
class DimensionMismatch : public Error { public: using Error::Error; };
class ServiceUnavailable : public Error { public: using Error::Error; };
class EmptyText : public Error { public: using Error::Error; };

// mechanism
class NotValidated : public Error { public: using Error::Error; };

// alignment
class ExhaustedTemplates : public Error { public: using Error::Error; };
class UnachievableConcept : public Error { public: using Error::Error; };
class EmptyComplement : public Error { public: using Error::Error; };

// runner / io
class IoError : public Error { public: using Error::Error; };
class ConfigInvalid : public Error { public: using Error::Error; };

}  // namespace parley
