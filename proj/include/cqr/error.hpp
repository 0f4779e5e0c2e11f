#pragma once

#include <stdexcept>
#include <string>

namespace cqr {

// Parameter outside its mathematical domain (theta not in (0,1), sigma <= 0, ...).
class DomainError : public std::domain_error {
public:
	using std::domain_error::domain_error;
};

// Mismatched lengths or dimensions.
class ShapeError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

// API used out of contract (backward without forward, wrong orientation, ...).
class UsageError : public std::logic_error {
public:
	using std::logic_error::logic_error;
};

// Invalid configuration values (split proportions, learning rates, ...).
class ConfigError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

// Data for which a quantity is undefined (zero mean, empty subset, ...).
class DegenerateDataError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

} // namespace cqr
