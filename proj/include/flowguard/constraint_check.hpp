#pragma once

// Static checks over generated restricted-C source, modelling the kernel
// verifier rules the classifier must satisfy:
//
//   1. bounded_loop     at most one loop, and it is a counted `for` whose
//                       condition compares the counter against an integer
//                       literal and whose body never writes the counter
//   2. backward_jump    no goto, inline asm or (mutual) recursion
//   3. unclamped_index  every subscript is a literal, fg_clamp(x, LIT) or
//                       x & LIT, and LIT fits the declared array size
//   4. floating_point   no float/double types or floating literals
//   5. stack            the header declares `stack_bytes: N`, N <= 512, and
//                       the locals of all functions fit in N
//
// The analysis is lexical: comments and string literals are stripped, the
// remaining text is tokenized and scanned with bracket matching. It is not a
// C parser and only has to understand the subset the emitter produces plus
// the mutants the tests inject.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace flowguard {

inline constexpr std::size_t kStackLimitBytes = 512;

enum class Rule { parse, bounded_loop, backward_jump, unclamped_index, floating_point, stack };

inline const char* to_string(Rule r) noexcept {
    switch (r) {
        case Rule::parse: return "parse";
        case Rule::bounded_loop: return "bounded_loop";
        case Rule::backward_jump: return "backward_jump";
        case Rule::unclamped_index: return "unclamped_index";
        case Rule::floating_point: return "floating_point";
        case Rule::stack: return "stack";
    }
    return "unknown";
}

struct Violation {
    Rule rule;
    std::string location;
    std::string detail;
};

struct ConstraintReport {
    bool passed = true;
    std::vector<Violation> violations;

    void add(Rule rule, std::string location, std::string detail) {
        violations.push_back({rule, std::move(location), std::move(detail)});
        passed = false;
    }
    bool has(Rule rule) const {
        return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
    }
};

namespace lex {

enum class Kind { ident, number, string, punct };

struct Token {
    Kind kind;
    std::string text;
    int line;
};

struct Lexed {
    std::vector<Token> tokens;        // code outside preprocessor directives
    std::vector<Token> macro_tokens;  // bodies of #define directives
    std::vector<std::string> comments;
    std::optional<std::string> error;
    int error_line = 0;
};

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline Lexed tokenize(std::string_view src) {
    static const char* const kPuncts[] = {"<<=", ">>=", "...", "->", "++", "--", "<=", ">=", "==", "!=", "&&",
                                          "||",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>"};
    Lexed out;
    int line = 1;
    bool line_start = true;
    bool in_directive = false;
    bool directive_is_define = false;
    std::size_t i = 0;
    const std::size_t n = src.size();

    auto push = [&](Kind k, std::string text) {
        if (in_directive) {
            if (directive_is_define) out.macro_tokens.push_back({k, std::move(text), line});
        } else {
            out.tokens.push_back({k, std::move(text), line});
        }
    };
    auto fail = [&](const char* why) {
        out.error = why;
        out.error_line = line;
    };

    while (i < n) {
        const char c = src[i];
        if (c == '\n') {
            if (!(i > 0 && src[i - 1] == '\\')) in_directive = false;
            ++line;
            line_start = true;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == '\\' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            const std::size_t end = src.find('\n', i);
            out.comments.emplace_back(src.substr(i + 2, (end == std::string_view::npos ? n : end) - i - 2));
            i = end == std::string_view::npos ? n : end;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            const std::size_t end = src.find("*/", i + 2);
            if (end == std::string_view::npos) {
                fail("unterminated comment");
                return out;
            }
            const auto body = src.substr(i + 2, end - i - 2);
            line += static_cast<int>(std::count(body.begin(), body.end(), '\n'));
            out.comments.emplace_back(body);
            i = end + 2;
            continue;
        }
        if (line_start && c == '#') {
            in_directive = true;
            std::size_t j = i + 1;
            while (j < n && (src[j] == ' ' || src[j] == '\t')) ++j;
            std::size_t k = j;
            while (k < n && is_ident_char(src[k])) ++k;
            directive_is_define = src.substr(j, k - j) == "define";
            const bool is_include = src.substr(j, k - j) == "include";
            line_start = false;
            if (is_include) {
                // Header names are not tokens; skip to end of line.
                while (i < n && src[i] != '\n') ++i;
                continue;
            }
            i = k;
            continue;
        }
        line_start = false;
        if (c == '"' || c == '\'') {
            std::size_t j = i + 1;
            while (j < n && src[j] != c) {
                if (src[j] == '\\') ++j;
                else if (src[j] == '\n') break;
                ++j;
            }
            if (j >= n || src[j] != c) {
                fail("unterminated literal");
                return out;
            }
            push(Kind::string, std::string(src.substr(i, j + 1 - i)));
            i = j + 1;
            continue;
        }
        if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < n && is_ident_char(src[j])) ++j;
            push(Kind::ident, std::string(src.substr(i, j - i)));
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            // pp-number: digits, letters, '.', and signs after an exponent marker.
            std::size_t j = i + 1;
            while (j < n) {
                const char d = src[j];
                if (is_ident_char(d) || d == '.') {
                    ++j;
                } else if ((d == '+' || d == '-') &&
                           (src[j - 1] == 'e' || src[j - 1] == 'E' || src[j - 1] == 'p' || src[j - 1] == 'P')) {
                    ++j;
                } else {
                    break;
                }
            }
            push(Kind::number, std::string(src.substr(i, j - i)));
            i = j;
            continue;
        }
        std::string punct(1, c);
        for (const char* p : kPuncts) {
            const std::string_view pv(p);
            if (src.substr(i, pv.size()) == pv) {
                punct = std::string(pv);
                break;
            }
        }
        push(Kind::punct, punct);
        i += punct.size();
    }
    return out;
}

inline bool is_float_literal(const std::string& t) {
    if (t.size() > 1 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X'))
        return t.find_first_of(".pP") != std::string::npos;
    return t.find_first_of(".eE") != std::string::npos;
}

/// Integer literal value (decimal or hex, optional u/l suffixes).
inline std::optional<std::uint64_t> int_literal(const Token& t) {
    if (t.kind != Kind::number || is_float_literal(t.text)) return std::nullopt;
    std::string s = t.text;
    while (!s.empty() && (s.back() == 'u' || s.back() == 'U' || s.back() == 'l' || s.back() == 'L')) s.pop_back();
    if (s.empty()) return std::nullopt;
    int base = 10;
    std::size_t start = 0;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        start = 2;
    }
    std::uint64_t v = 0;
    for (std::size_t k = start; k < s.size(); ++k) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[k])));
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else return std::nullopt;
        if (d >= base) return std::nullopt;
        v = v * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(d);
    }
    return v;
}

/// Index of the bracket matching the opener at `open`, or npos.
inline std::size_t match(const std::vector<Token>& toks, std::size_t open) {
    const std::string& o = toks[open].text;
    const std::string c = o == "(" ? ")" : o == "[" ? "]" : "}";
    int depth = 0;
    for (std::size_t k = open; k < toks.size(); ++k) {
        if (toks[k].kind != Kind::punct) continue;
        if (toks[k].text == o) ++depth;
        else if (toks[k].text == c && --depth == 0) return k;
    }
    return std::string::npos;
}

}  // namespace lex

namespace detail {

inline const std::map<std::string, std::size_t>& scalar_sizes() {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"fg_u8", 1},  {"fg_s8", 1},  {"__u8", 1},   {"short", 2},  {"fg_u16", 2}, {"fg_s16", 2},
        {"__u16", 2},  {"int", 4},    {"fg_u32", 4}, {"fg_s32", 4}, {"__u32", 4},  {"long", 8},
        {"fg_u64", 8}, {"fg_s64", 8}, {"__u64", 8},  {"__s64", 8}, {"float", 4},  {"double", 8},
    };
    return sizes;
}

struct Function {
    std::string name;
    std::size_t body_open;
    std::size_t body_close;
};

struct Scan {
    std::vector<Function> functions;
    std::map<std::string, std::size_t> struct_sizes;
    std::map<std::string, std::uint64_t> array_sizes;  // declarations with literal size
};

inline std::string at(const lex::Token& t) { return "line " + std::to_string(t.line); }

/// Size of the type starting at toks[k] (after any `const`); sets `next` to the
/// first token after the type name. nullopt if toks[k] does not start a type.
inline std::optional<std::size_t> type_size(const std::vector<lex::Token>& toks, std::size_t k, const Scan& scan,
                                            std::size_t& next) {
    while (k < toks.size() && (toks[k].text == "const" || toks[k].text == "volatile")) ++k;
    if (k >= toks.size() || toks[k].kind != lex::Kind::ident) return std::nullopt;
    if (toks[k].text == "struct") {
        if (k + 1 >= toks.size() || toks[k + 1].kind != lex::Kind::ident) return std::nullopt;
        auto it = scan.struct_sizes.find(toks[k + 1].text);
        next = k + 2;
        return it == scan.struct_sizes.end() ? std::optional<std::size_t>(0) : std::optional<std::size_t>(it->second);
    }
    // "unsigned char", "long long", "signed" alone and friends: the size comes
    // from the widest non-sign word, plain int when there is none.
    const auto& sizes = scalar_sizes();
    auto is_sign = [](const std::string& w) { return w == "unsigned" || w == "signed"; };
    std::size_t size = 0;
    bool any = false;
    next = k;
    while (next < toks.size() && (is_sign(toks[next].text) || sizes.count(toks[next].text))) {
        if (!is_sign(toks[next].text)) size = std::max(size, sizes.at(toks[next].text));
        any = true;
        ++next;
    }
    if (!any) return std::nullopt;
    return size == 0 ? 4 : size;
}

/// Parses top-level struct definitions (member sizes with natural alignment),
/// function bodies, and literal-sized array declarations.
inline Scan scan_structure(const std::vector<lex::Token>& toks) {
    Scan scan;
    int depth = 0;
    for (std::size_t k = 0; k < toks.size(); ++k) {
        const auto& t = toks[k];
        if (t.kind == lex::Kind::punct && t.text == "{") {
            if (depth == 0) {
                const std::size_t close = lex::match(toks, k);
                if (close == std::string::npos) return scan;
                if (k >= 2 && toks[k - 2].text == "struct" && toks[k - 1].kind == lex::Kind::ident) {
                    std::size_t size = 0;
                    std::size_t align = 1;
                    for (std::size_t m = k + 1; m < close;) {
                        std::size_t next = m;
                        auto ts = type_size(toks, m, scan, next);
                        if (!ts) {
                            ++m;
                            continue;
                        }
                        std::size_t elem = *ts;
                        std::size_t count = 1;
                        std::size_t q = next;
                        bool pointer = false;
                        while (q < close && toks[q].text == "*") {
                            pointer = true;
                            ++q;
                        }
                        if (pointer) elem = 8;
                        if (q + 3 < close && toks[q + 1].text == "[") {
                            if (auto lit = lex::int_literal(toks[q + 2])) count = static_cast<std::size_t>(*lit);
                        }
                        const std::size_t a = std::max<std::size_t>(1, std::min<std::size_t>(elem, 8));
                        size = (size + a - 1) / a * a + elem * count;
                        align = std::max(align, a);
                        while (m < close && toks[m].text != ";") ++m;
                        ++m;
                    }
                    scan.struct_sizes[toks[k - 1].text] = (size + align - 1) / align * align;
                } else if (k >= 1 && toks[k - 1].text == ")") {
                    // function definition: name precedes the parameter list
                    int pd = 0;
                    std::size_t p = k - 1;
                    for (;; --p) {
                        if (toks[p].text == ")") ++pd;
                        else if (toks[p].text == "(" && --pd == 0) break;
                        if (p == 0) break;
                    }
                    if (p > 0 && toks[p - 1].kind == lex::Kind::ident)
                        scan.functions.push_back({toks[p - 1].text, k, close});
                }
            }
            ++depth;
        } else if (t.kind == lex::Kind::punct && t.text == "}") {
            --depth;
        } else if (t.kind == lex::Kind::punct && t.text == "[" && k >= 1 && toks[k - 1].kind == lex::Kind::ident &&
                   k >= 2) {
            // `TYPE name[LIT]` (possibly `struct X name[LIT]` or `TYPE *name[LIT]`)
            const auto& before = toks[k - 2];
            const bool typed = scalar_sizes().count(before.text) ||
                               (k >= 3 && toks[k - 3].text == "struct" && before.kind == lex::Kind::ident);
            if (typed && k + 2 < toks.size() && toks[k + 2].text == "]") {
                if (auto lit = lex::int_literal(toks[k + 1])) scan.array_sizes[toks[k - 1].text] = *lit;
            }
        }
    }
    return scan;
}

inline bool declaration_position(const std::vector<lex::Token>& toks, std::size_t k) {
    if (k == 0) return false;
    const std::string& prev = toks[k - 1].text;
    if (prev == "{" || prev == ";" || prev == "}") return true;
    return prev == "(" && k >= 2 && toks[k - 2].text == "for";
}

}  // namespace detail

/// Conservative stack estimate: the sum of all function-local declarations
/// (every helper is force-inlined into the entry point).
inline std::size_t estimate_stack_bytes(std::string_view source) {
    const auto lexed = lex::tokenize(source);
    const auto& toks = lexed.tokens;
    const auto scan = detail::scan_structure(toks);
    std::size_t total = 0;
    for (const auto& fn : scan.functions) {
        for (std::size_t k = fn.body_open + 1; k < fn.body_close; ++k) {
            if (!detail::declaration_position(toks, k)) continue;
            std::size_t next = k;
            const auto base = detail::type_size(toks, k, scan, next);
            if (!base) continue;
            // One or more declarators separated by top-level commas.
            std::size_t q = next;
            while (q < fn.body_close) {
                std::size_t elem = *base;
                while (q < fn.body_close && toks[q].text == "*") {
                    elem = 8;
                    ++q;
                }
                if (q >= fn.body_close || toks[q].kind != lex::Kind::ident) break;
                std::size_t count = 1;
                if (q + 3 < fn.body_close && toks[q + 1].text == "[") {
                    if (auto lit = lex::int_literal(toks[q + 2])) count = static_cast<std::size_t>(*lit);
                }
                total += elem * count;
                int pd = 0;
                while (q < fn.body_close) {
                    const auto& s = toks[q].text;
                    if (s == "(" || s == "[" || s == "{") ++pd;
                    else if (s == ")" || s == "]" || s == "}") --pd;
                    else if (pd == 0 && (s == ";" || s == ",")) break;
                    if (pd < 0) break;
                    ++q;
                }
                if (q < fn.body_close && toks[q].text == ",") {
                    ++q;
                    continue;
                }
                break;
            }
        }
    }
    return total;
}

inline ConstraintReport check_source(std::string_view source) {
    ConstraintReport report;
    const auto lexed = lex::tokenize(source);
    if (lexed.error) {
        report.add(Rule::parse, "line " + std::to_string(lexed.error_line), *lexed.error);
        return report;
    }
    const auto& toks = lexed.tokens;

    // Balanced brackets are a precondition for everything else.
    {
        std::vector<const lex::Token*> stack;
        for (const auto& t : toks) {
            if (t.kind != lex::Kind::punct) continue;
            if (t.text == "(" || t.text == "[" || t.text == "{") {
                stack.push_back(&t);
            } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                const char want = t.text == ")" ? '(' : t.text == "]" ? '[' : '{';
                if (stack.empty() || stack.back()->text[0] != want) {
                    report.add(Rule::parse, detail::at(t), "unbalanced '" + t.text + "'");
                    return report;
                }
                stack.pop_back();
            }
        }
        if (!stack.empty()) {
            report.add(Rule::parse, detail::at(*stack.back()), "unclosed '" + stack.back()->text + "'");
            return report;
        }
    }

    const auto scan = detail::scan_structure(toks);

    // Rule 4: floating point anywhere, macros included.
    for (const auto* list : {&toks, &lexed.macro_tokens}) {
        for (const auto& t : *list) {
            if (t.kind == lex::Kind::ident && (t.text == "float" || t.text == "double"))
                report.add(Rule::floating_point, detail::at(t), "floating-point type '" + t.text + "'");
            else if (t.kind == lex::Kind::number && lex::is_float_literal(t.text))
                report.add(Rule::floating_point, detail::at(t), "floating-point literal '" + t.text + "'");
        }
    }

    // Rules 1 and 2: loops and backward control transfer.
    int loops = 0;
    for (std::size_t k = 0; k < toks.size(); ++k) {
        const auto& t = toks[k];
        if (t.kind != lex::Kind::ident) continue;
        if (t.text == "while" || t.text == "do") {
            ++loops;
            report.add(Rule::bounded_loop, detail::at(t), "'" + t.text + "' loop has no literal iteration bound");
        } else if (t.text == "goto") {
            report.add(Rule::backward_jump, detail::at(t), "goto");
        } else if (t.text == "asm" || t.text == "__asm__" || t.text == "__asm") {
            report.add(Rule::backward_jump, detail::at(t), "inline assembly");
        } else if (t.text == "for") {
            ++loops;
            if (k + 1 >= toks.size() || toks[k + 1].text != "(") {
                report.add(Rule::parse, detail::at(t), "malformed for statement");
                continue;
            }
            const std::size_t close = lex::match(toks, k + 1);
            std::vector<std::vector<const lex::Token*>> parts(1);
            int pd = 0;
            for (std::size_t q = k + 2; q < close; ++q) {
                const auto& s = toks[q].text;
                if (s == "(" || s == "[") ++pd;
                if (s == ")" || s == "]") --pd;
                if (pd == 0 && s == ";") {
                    parts.emplace_back();
                    continue;
                }
                parts.back().push_back(&toks[q]);
            }
            std::string counter;
            bool bounded = false;
            if (parts.size() == 3) {
                const auto& cond = parts[1];
                if (cond.size() == 3 && cond[0]->kind == lex::Kind::ident &&
                    (cond[1]->text == "<" || cond[1]->text == "<=") && lex::int_literal(*cond[2])) {
                    counter = cond[0]->text;
                } else if (cond.size() == 3 && cond[2]->kind == lex::Kind::ident &&
                           (cond[1]->text == ">" || cond[1]->text == ">=") && lex::int_literal(*cond[0])) {
                    counter = cond[2]->text;
                }
                const auto& inc = parts[2];
                const bool increments =
                    !counter.empty() &&
                    ((inc.size() == 2 && ((inc[0]->text == counter && inc[1]->text == "++") ||
                                          (inc[0]->text == "++" && inc[1]->text == counter))) ||
                     (inc.size() == 3 && inc[0]->text == counter && inc[1]->text == "+=" && lex::int_literal(*inc[2]) &&
                      *lex::int_literal(*inc[2]) > 0));
                const auto& init = parts[0];
                const bool initialized = init.size() >= 3 && init[init.size() - 3]->text == counter &&
                                         init[init.size() - 2]->text == "=" &&
                                         lex::int_literal(*init[init.size() - 1]);
                bounded = increments && initialized;
            }
            if (!bounded) {
                report.add(Rule::bounded_loop, detail::at(t), "for loop without a literal iteration bound");
                continue;
            }
            // The body must not write the counter.
            std::size_t body_end;
            if (close + 1 < toks.size() && toks[close + 1].text == "{") {
                body_end = lex::match(toks, close + 1);
            } else {
                body_end = close + 1;
                while (body_end < toks.size() && toks[body_end].text != ";") ++body_end;
            }
            static const std::set<std::string> writes = {"=",  "+=", "-=", "*=", "/=", "%=",  "&=",
                                                         "|=", "^=", "<<=", ">>=", "++", "--"};
            for (std::size_t q = close + 1; q < body_end && q < toks.size(); ++q) {
                if (toks[q].text != counter) continue;
                const bool post = q + 1 < toks.size() && writes.count(toks[q + 1].text);
                const bool pre = toks[q - 1].text == "++" || toks[q - 1].text == "--";
                if (post || pre) {
                    report.add(Rule::bounded_loop, detail::at(toks[q]), "loop counter '" + counter + "' modified in body");
                    break;
                }
            }
        }
    }
    if (loops > 1)
        report.add(Rule::bounded_loop, "program", std::to_string(loops) + " loops; at most one counted loop is allowed");

    // Rule 2: recursion through the call graph.
    {
        std::map<std::string, std::set<std::string>> calls;
        std::set<std::string> defined;
        for (const auto& fn : scan.functions) defined.insert(fn.name);
        for (const auto& fn : scan.functions) {
            auto& out = calls[fn.name];
            for (std::size_t q = fn.body_open + 1; q + 1 < fn.body_close; ++q)
                if (toks[q].kind == lex::Kind::ident && toks[q + 1].text == "(" && defined.count(toks[q].text))
                    out.insert(toks[q].text);
        }
        std::map<std::string, int> color;  // 0 white, 1 grey, 2 black
        std::string cyclic;
        auto dfs = [&](auto&& self, const std::string& f) -> bool {
            color[f] = 1;
            for (const auto& g : calls[f]) {
                if (color[g] == 1) {
                    cyclic = g;
                    return true;
                }
                if (color[g] == 0 && self(self, g)) return true;
            }
            color[f] = 2;
            return false;
        };
        for (const auto& fn : scan.functions) {
            if (color[fn.name] == 0 && dfs(dfs, fn.name)) {
                report.add(Rule::backward_jump, "function " + cyclic, "recursive call cycle through '" + cyclic + "'");
                break;
            }
        }
    }

    // Rule 3: subscripts.
    for (std::size_t k = 0; k < toks.size(); ++k) {
        if (toks[k].text != "[" || toks[k].kind != lex::Kind::punct) continue;
        const std::size_t close = lex::match(toks, k);
        const std::string array = k > 0 && toks[k - 1].kind == lex::Kind::ident ? toks[k - 1].text : "<expr>";
        const bool declaration =
            k >= 2 && toks[k - 1].kind == lex::Kind::ident &&
            (detail::scalar_sizes().count(toks[k - 2].text) ||
             (toks[k - 2].text == "*" && k >= 3 && detail::scalar_sizes().count(toks[k - 3].text)) ||
             (k >= 3 && toks[k - 3].text == "struct"));
        const std::size_t len = close - k - 1;
        if (declaration) {
            if (len != 1 || !lex::int_literal(toks[k + 1]))
                report.add(Rule::unclamped_index, detail::at(toks[k]), "array '" + array + "' declared without a literal size");
            continue;
        }
        auto declared = scan.array_sizes.find(array);
        auto check_bound = [&](std::uint64_t limit, const char* what) {
            if (declared != scan.array_sizes.end() && limit > declared->second)
                report.add(Rule::unclamped_index, detail::at(toks[k]),
                           std::string(what) + " " + std::to_string(limit) + " exceeds size " +
                               std::to_string(declared->second) + " of '" + array + "'");
        };
        if (len == 1 && lex::int_literal(toks[k + 1])) {
            check_bound(*lex::int_literal(toks[k + 1]) + 1, "literal index bound");
            continue;
        }
        // fg_clamp(expr, LIT)
        if (len >= 6 && toks[k + 1].text == "fg_clamp" && toks[k + 2].text == "(" &&
            lex::match(toks, k + 2) == close - 1 && toks[close - 3].text == "," && lex::int_literal(toks[close - 2])) {
            check_bound(*lex::int_literal(toks[close - 2]), "clamp bound");
            continue;
        }
        // expr & LIT with the & at top level
        if (len >= 3 && toks[close - 2].text == "&" && lex::int_literal(toks[close - 1])) {
            int pd = 0;
            for (std::size_t q = k + 1; q < close - 2; ++q) {
                if (toks[q].text == "(" || toks[q].text == "[") ++pd;
                if (toks[q].text == ")" || toks[q].text == "]") --pd;
            }
            const std::uint64_t mask = *lex::int_literal(toks[close - 1]);
            if (pd == 0 && (mask & (mask + 1)) == 0) {
                check_bound(mask + 1, "mask bound");
                continue;
            }
        }
        report.add(Rule::unclamped_index, detail::at(toks[k]),
                   "subscript of '" + array + "' is not clamped by a literal bound");
    }

    // Rule 5: declared and estimated stack usage.
    std::optional<std::size_t> declared_stack;
    for (const auto& c : lexed.comments) {
        const auto pos = c.find("stack_bytes:");
        if (pos == std::string::npos) continue;
        std::size_t q = pos + 12;
        while (q < c.size() && c[q] == ' ') ++q;
        std::size_t value = 0;
        bool any = false;
        while (q < c.size() && std::isdigit(static_cast<unsigned char>(c[q]))) {
            value = value * 10 + static_cast<std::size_t>(c[q] - '0');
            any = true;
            ++q;
        }
        if (any) {
            declared_stack = value;
            break;
        }
    }
    const std::size_t estimate = estimate_stack_bytes(source);
    if (!declared_stack) {
        report.add(Rule::stack, "header", "no 'stack_bytes:' declaration");
    } else {
        if (*declared_stack > kStackLimitBytes)
            report.add(Rule::stack, "header",
                       "declared stack " + std::to_string(*declared_stack) + " bytes exceeds " +
                           std::to_string(kStackLimitBytes));
        if (estimate > *declared_stack)
            report.add(Rule::stack, "program",
                       "locals need " + std::to_string(estimate) + " bytes but only " +
                           std::to_string(*declared_stack) + " are declared");
    }
    return report;
}

}  // namespace flowguard
