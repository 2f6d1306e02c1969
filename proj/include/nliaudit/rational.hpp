#pragma once

#include <boost/rational.hpp>
#include <cstdint>
#include <string>

namespace nliaudit {

// Exact rational rate. Counts in a dataset are small (tens of thousands),
// so int64 never overflows here. Rates are converted to decimal only at the
// rendering boundary; all identities between measures hold exactly.
using Rat = boost::rational<std::int64_t>;

inline double to_double(const Rat& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// Renders r*100 with two decimals, e.g. 3/5 -> "60.00". Round half away
// from zero on the fourth decimal digit.
inline std::string percent2(const Rat& r) {
    Rat scaled = r * 10000;    // hundredths of a percent
    std::int64_t num = scaled.numerator();
    std::int64_t den = scaled.denominator();
    bool neg = (num < 0);
    if (neg) num = -num;
    std::int64_t q = num / den;
    std::int64_t rem = num % den;
    if (2 * rem >= den) ++q;
    std::string digits = std::to_string(q);
    while (digits.size() < 3) digits.insert(digits.begin(), '0');
    std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
    if (neg && q != 0) out.insert(out.begin(), '-');
    return out;
}

}  // namespace nliaudit
