#pragma once

#include <limits>
#include <stdexcept>
#include <string>

#include "hforget/types.hpp"

namespace hforget {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Non-finite integrand or price; usually a quadrature config unsuited to the parameters.
class PricingError : public Error {
public:
    using Error::Error;
};

// A finite-difference bump could not be kept inside the parameter domain.
class BumpError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what,
                                 double min_eig = std::numeric_limits<double>::quiet_NaN(),
                                 double weyl_lower_bound = std::numeric_limits<double>::quiet_NaN())
        : Error(what), min_eig_(min_eig), weyl_lower_bound_(weyl_lower_bound) {}

    double min_eig() const noexcept { return min_eig_; }
    double weyl_lower_bound() const noexcept { return weyl_lower_bound_; }

private:
    double min_eig_;
    double weyl_lower_bound_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class CorruptFile : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

class DatasetHashMismatch : public Error {
public:
    using Error::Error;
};

class UnknownQuoteId : public Error {
public:
    explicit UnknownQuoteId(QuoteId id)
        : Error("unknown quote id " + std::to_string(id)), id_(id) {}
    QuoteId id() const noexcept { return id_; }

private:
    QuoteId id_;
};

}  // namespace hforget
