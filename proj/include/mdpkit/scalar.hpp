#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mdpkit {

/// Exact scalar for the rational mode. Arbitrary-precision, header-only.
using Rational = boost::multiprecision::cpp_rational;

/// Arbitrary-size integer for sample budgets and episode schedules.
using BigInt = boost::multiprecision::cpp_int;

/// 100-bit binary float for the high-precision support identities.
using Float100 = boost::multiprecision::number<
    boost::multiprecision::cpp_bin_float<100, boost::multiprecision::digit_base_2>>;

/// Numeric conventions per scalar mode. Float mode carries the global
/// 1e-9 tolerance; exact mode compares with zero slack.
template <class T>
struct scalar_traits;

template <>
struct scalar_traits<double> {
    static constexpr bool exact = false;
    static double tolerance() { return 1e-9; }
    static double from_fraction(long long num, long long den) {
        return static_cast<double>(num) / static_cast<double>(den);
    }
    static double to_double(double x) { return x; }
    static double abs(double x) { return std::fabs(x); }
};

template <>
struct scalar_traits<Rational> {
    static constexpr bool exact = true;
    static Rational tolerance() { return Rational(0); }
    static Rational from_fraction(long long num, long long den) { return Rational(num, den); }
    static double to_double(const Rational& x) { return x.template convert_to<double>(); }
    static Rational abs(const Rational& x) { return x < 0 ? Rational(-x) : x; }
};

template <class T>
double to_double(const T& x) {
    return scalar_traits<T>::to_double(x);
}

template <class T>
T abs_value(const T& x) {
    return scalar_traits<T>::abs(x);
}

/// Parses "3", "0.25", "-1.5e-2" or "2/7" into an exact rational.
/// Decimal strings convert exactly (powers of ten in the denominator),
/// which is what the model file format relies on in exact mode.
inline Rational parse_rational(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("parse_rational: empty string");
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
        BigInt num(text.substr(0, slash));
        BigInt den(text.substr(slash + 1));
        if (den == 0) throw std::invalid_argument("parse_rational: zero denominator");
        return Rational(num, den);
    }
    std::string mantissa = text;
    long long exp10 = 0;
    const auto epos = text.find_first_of("eE");
    if (epos != std::string::npos) {
        mantissa = text.substr(0, epos);
        exp10 = std::stoll(text.substr(epos + 1));
    }
    std::string digits;
    digits.reserve(mantissa.size());
    long long frac_digits = 0;
    bool seen_dot = false;
    for (char c : mantissa) {
        if (c == '.') {
            if (seen_dot) throw std::invalid_argument("parse_rational: bad literal " + text);
            seen_dot = true;
        } else {
            digits.push_back(c);
            if (seen_dot) ++frac_digits;
        }
    }
    BigInt num(digits);
    BigInt den(1);
    long long shift = exp10 - frac_digits;
    for (long long k = 0; k < shift; ++k) num *= 10;
    for (long long k = 0; k < -shift; ++k) den *= 10;
    return Rational(num, den);
}

inline Float100 to_float100(const Rational& q) {
    return Float100(boost::multiprecision::numerator(q)) /
           Float100(boost::multiprecision::denominator(q));
}

/// Serializes a rational as "num/den" (or plain integer when den == 1).
inline std::string rational_to_string(const Rational& q) {
    const BigInt num = boost::multiprecision::numerator(q);
    const BigInt den = boost::multiprecision::denominator(q);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

}  // namespace mdpkit
