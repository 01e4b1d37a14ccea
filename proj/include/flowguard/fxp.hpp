#pragma once

// Q47.16 fixed-point arithmetic.
//
// Every value on the classification path is an Fx64: a signed 64-bit raw
// integer interpreted as raw / 2^16. Arithmetic saturates at the int64 bounds
// instead of wrapping; each saturation event bumps a process-wide counter so
// tests and run summaries can see it happened.

#include <atomic>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowguard {

inline constexpr int kFracBits = 16;
inline constexpr std::int64_t kOneRaw = std::int64_t{1} << kFracBits;

struct Fx64 {
    std::int64_t raw = 0;

    static constexpr Fx64 from_raw(std::int64_t r) noexcept { return Fx64{r}; }
    static constexpr Fx64 max() noexcept { return Fx64{std::numeric_limits<std::int64_t>::max()}; }
    static constexpr Fx64 min() noexcept { return Fx64{std::numeric_limits<std::int64_t>::min()}; }

    // Lossy; for display and float-reference comparisons only.
    constexpr double to_double() const noexcept { return static_cast<double>(raw) / static_cast<double>(kOneRaw); }

    friend constexpr auto operator<=>(Fx64, Fx64) noexcept = default;
};

namespace detail {

inline std::atomic<std::uint64_t>& saturation_counter() noexcept {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

inline void note_saturation() noexcept {
    saturation_counter().fetch_add(1, std::memory_order_relaxed);
}

inline Fx64 saturate(__int128 wide) noexcept {
    constexpr __int128 hi = std::numeric_limits<std::int64_t>::max();
    constexpr __int128 lo = std::numeric_limits<std::int64_t>::min();
    if (wide > hi) {
        note_saturation();
        return Fx64::max();
    }
    if (wide < lo) {
        note_saturation();
        return Fx64::min();
    }
    return Fx64{static_cast<std::int64_t>(wide)};
}

}  // namespace detail

/// Number of saturation events since process start (or the last reset).
inline std::uint64_t saturation_count() noexcept {
    return detail::saturation_counter().load(std::memory_order_relaxed);
}

inline void reset_saturation_count() noexcept {
    detail::saturation_counter().store(0, std::memory_order_relaxed);
}

class FxParseError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline Fx64 fx_from_int(std::int64_t i) noexcept {
    return detail::saturate(static_cast<__int128>(i) * kOneRaw);
}

inline Fx64 fx_add(Fx64 a, Fx64 b) noexcept {
    return detail::saturate(static_cast<__int128>(a.raw) + b.raw);
}

inline Fx64 fx_sub(Fx64 a, Fx64 b) noexcept {
    return detail::saturate(static_cast<__int128>(a.raw) - b.raw);
}

inline Fx64 fx_abs(Fx64 a) noexcept {
    return a.raw < 0 ? detail::saturate(-static_cast<__int128>(a.raw)) : a;
}

/// Double-width product shifted right by 16; the arithmetic shift truncates
/// toward negative infinity.
inline Fx64 fx_mul(Fx64 a, Fx64 b) noexcept {
    const __int128 wide = static_cast<__int128>(a.raw) * b.raw;
    return detail::saturate(wide >> kFracBits);
}

/// raw / n, truncating toward zero. Throws std::domain_error for n == 0.
inline Fx64 fx_div_uint(Fx64 a, std::uint64_t n) {
    if (n == 0) throw std::domain_error("fx_div_uint: division by zero");
    // __int128 division truncates toward zero, like C's signed division.
    return detail::saturate(static_cast<__int128>(a.raw) / static_cast<__int128>(n));
}

/// Parses a finite decimal ("-12.375", "1e-05", "+3") to the nearest Q16 value,
/// ties away from zero. Exact for any number of digits. Values outside the
/// representable range saturate (and count as a saturation event).
inline Fx64 fx_from_decimal(std::string_view s) {
    const std::string original(s);
    auto fail = [&](const char* why) -> FxParseError {
        return FxParseError("invalid decimal '" + original + "': " + why);
    };

    std::size_t pos = 0;
    bool negative = false;
    if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        negative = s[pos] == '-';
        ++pos;
    }

    std::string digits;  // all mantissa digits, decimal point removed
    long long point = -1;  // number of digits before the decimal point
    bool any_digit = false;
    for (; pos < s.size(); ++pos) {
        const char c = s[pos];
        if (c >= '0' && c <= '9') {
            digits.push_back(c);
            any_digit = true;
        } else if (c == '.') {
            if (point >= 0) throw fail("multiple decimal points");
            point = static_cast<long long>(digits.size());
        } else {
            break;
        }
    }
    if (!any_digit) throw fail("no digits");
    if (point < 0) point = static_cast<long long>(digits.size());

    if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
        ++pos;
        bool exp_negative = false;
        if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
            exp_negative = s[pos] == '-';
            ++pos;
        }
        if (pos >= s.size()) throw fail("empty exponent");
        long long exponent = 0;
        for (; pos < s.size(); ++pos) {
            const char c = s[pos];
            if (c < '0' || c > '9') throw fail("bad exponent");
            if (exponent < 100000) exponent = exponent * 10 + (c - '0');
        }
        point += exp_negative ? -exponent : exponent;
    }
    if (pos != s.size()) throw fail("trailing characters");

    // Normalize so 0 <= point <= digits.size(): integer part = digits[0, point).
    if (point < 0) {
        digits.insert(0, static_cast<std::size_t>(-point), '0');
        point = 0;
    }
    if (point > static_cast<long long>(digits.size())) {
        if (point > 100) {
            // Anything this long is out of range unless all digits are zero.
            if (digits.find_first_not_of('0') != std::string::npos) {
                detail::note_saturation();
                return negative ? Fx64::min() : Fx64::max();
            }
            return Fx64{0};
        }
        digits.append(static_cast<std::size_t>(point) - digits.size(), '0');
    }

    // Integer part, saturating early once it exceeds 2^47.
    constexpr __int128 kIntLimit = static_cast<__int128>(1) << 48;
    __int128 int_part = 0;
    bool int_overflow = false;
    for (long long i = 0; i < point; ++i) {
        int_part = int_part * 10 + (digits[static_cast<std::size_t>(i)] - '0');
        if (int_part > kIntLimit) {
            int_overflow = true;
            break;
        }
    }
    if (int_overflow) {
        detail::note_saturation();
        return negative ? Fx64::min() : Fx64::max();
    }

    // Fraction * 2^16 by repeated doubling of the decimal digit string; the
    // carry out of the leading digit accumulates the integer result.
    std::vector<int> frac;
    for (std::size_t i = static_cast<std::size_t>(point); i < digits.size(); ++i) frac.push_back(digits[i] - '0');
    std::int64_t frac_raw = 0;
    for (int bit = 0; bit < kFracBits; ++bit) {
        int carry = 0;
        for (auto it = frac.rbegin(); it != frac.rend(); ++it) {
            const int v = *it * 2 + carry;
            *it = v % 10;
            carry = v / 10;
        }
        frac_raw = frac_raw * 2 + carry;
    }
    // Remaining fraction decides rounding: >= 0.5 rounds away from zero.
    bool round_up = false;
    if (!frac.empty() && frac.front() >= 5) round_up = true;
    frac_raw += round_up ? 1 : 0;

    __int128 magnitude = int_part * kOneRaw + frac_raw;
    return detail::saturate(negative ? -magnitude : magnitude);
}

/// Nearest Q16 value to a double, ties away from zero. Reference/test
/// plumbing only; nothing on the classification path uses floating point.
inline Fx64 fx_from_double(double v) noexcept {
    const double scaled = v * static_cast<double>(kOneRaw);
    if (!(scaled < 9.2233720368547758e18)) {
        detail::note_saturation();
        return scaled != scaled ? Fx64{} : Fx64::max();
    }
    if (scaled < -9.2233720368547758e18) {
        detail::note_saturation();
        return Fx64::min();
    }
    return Fx64{std::llround(scaled)};
}

/// Shortest exact decimal rendering of an Fx64 (every Q16 value has a finite
/// decimal expansion of at most 16 fractional digits).
inline std::string fx_to_decimal(Fx64 v) {
    const bool negative = v.raw < 0;
    unsigned __int128 mag = negative ? static_cast<unsigned __int128>(-static_cast<__int128>(v.raw))
                                     : static_cast<unsigned __int128>(v.raw);
    const auto int_part = static_cast<std::uint64_t>(mag >> kFracBits);
    // fraction / 2^16 == fraction * 5^16 / 10^16
    unsigned __int128 frac = (mag & (kOneRaw - 1)) * static_cast<unsigned __int128>(152587890625ULL);
    std::string out = negative ? "-" : "";
    out += std::to_string(int_part);
    if (frac != 0) {
        std::string f(16, '0');
        for (int i = 15; i >= 0; --i) {
            f[static_cast<std::size_t>(i)] = static_cast<char>('0' + static_cast<int>(frac % 10));
            frac /= 10;
        }
        while (!f.empty() && f.back() == '0') f.pop_back();
        out += "." + f;
    }
    return out;
}

inline std::ostream& operator<<(std::ostream& os, Fx64 v) { return os << fx_to_decimal(v); }

}  // namespace flowguard
