#pragma once

#include <cctype>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// Minimal TOML subset: [sections], key = value with strings, integers,
// floats, booleans, and flat homogeneous arrays; '#' comments. Errors carry
// line and column so misspelled keys fail fast with a location.

namespace pfncast::toml {

struct TomlError : std::runtime_error {
    int line, col;
    TomlError(const std::string& msg, int line_, int col_)
        : std::runtime_error("toml:" + std::to_string(line_) + ":" + std::to_string(col_) +
                             ": " + msg),
          line(line_),
          col(col_) {}
};

struct Value {
    std::variant<std::string, int64_t, double, bool, std::vector<double>,
                 std::vector<std::string>>
        v;
    int line = 0, col = 0;

    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_number() const {
        return std::holds_alternative<int64_t>(v) || std::holds_alternative<double>(v);
    }

    std::string as_string() const {
        if (!is_string()) throw TomlError("expected a string", line, col);
        return std::get<std::string>(v);
    }
    int64_t as_int() const {
        if (std::holds_alternative<int64_t>(v)) return std::get<int64_t>(v);
        throw TomlError("expected an integer", line, col);
    }
    double as_double() const {
        if (std::holds_alternative<int64_t>(v))
            return static_cast<double>(std::get<int64_t>(v));
        if (std::holds_alternative<double>(v)) return std::get<double>(v);
        throw TomlError("expected a number", line, col);
    }
    bool as_bool() const {
        if (!std::holds_alternative<bool>(v)) throw TomlError("expected a boolean", line, col);
        return std::get<bool>(v);
    }
    std::vector<double> as_number_array() const {
        if (!std::holds_alternative<std::vector<double>>(v))
            throw TomlError("expected an array of numbers", line, col);
        return std::get<std::vector<double>>(v);
    }
};

using Section = std::map<std::string, Value>;
using Document = std::map<std::string, Section>;

namespace detail {

struct Cursor {
    const std::string& text;
    size_t pos = 0;
    int line = 1, col = 1;

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char take() {
        char c = text[pos++];
        if (c == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        return c;
    }
    void skip_ws_inline() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) take();
    }
};

inline void skip_to_eol(Cursor& c) {
    while (!c.eof() && c.peek() != '\n') c.take();
}

inline std::string parse_key(Cursor& c) {
    std::string key;
    while (!c.eof()) {
        char ch = c.peek();
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')
            key.push_back(c.take());
        else
            break;
    }
    if (key.empty()) throw TomlError("expected a key", c.line, c.col);
    return key;
}

inline Value parse_scalar(Cursor& c);

inline Value parse_array(Cursor& c) {
    int line = c.line, col = c.col;
    c.take();  // '['
    std::vector<double> nums;
    std::vector<std::string> strs;
    bool any_string = false, any_number = false;
    for (;;) {
        c.skip_ws_inline();
        while (!c.eof() && c.peek() == '\n') {
            c.take();
            c.skip_ws_inline();
        }
        if (c.eof()) throw TomlError("unterminated array", line, col);
        if (c.peek() == ']') {
            c.take();
            break;
        }
        Value elem = parse_scalar(c);
        if (elem.is_string()) {
            any_string = true;
            strs.push_back(elem.as_string());
        } else if (elem.is_number()) {
            any_number = true;
            nums.push_back(elem.as_double());
        } else {
            throw TomlError("array elements must be numbers or strings", elem.line, elem.col);
        }
        c.skip_ws_inline();
        if (!c.eof() && c.peek() == ',') c.take();
    }
    if (any_string && any_number)
        throw TomlError("mixed-type arrays are not supported", line, col);
    Value out;
    out.line = line;
    out.col = col;
    if (any_string)
        out.v = std::move(strs);
    else
        out.v = std::move(nums);
    return out;
}

inline Value parse_scalar(Cursor& c) {
    Value out;
    out.line = c.line;
    out.col = c.col;
    if (c.eof()) throw TomlError("expected a value", c.line, c.col);
    char ch = c.peek();
    if (ch == '[') return parse_array(c);
    if (ch == '"') {
        c.take();
        std::string s;
        while (!c.eof() && c.peek() != '"') {
            char d = c.take();
            if (d == '\\') {
                if (c.eof()) throw TomlError("bad escape", c.line, c.col);
                char e = c.take();
                switch (e) {
                    case 'n': s.push_back('\n'); break;
                    case 't': s.push_back('\t'); break;
                    case '"': s.push_back('"'); break;
                    case '\\': s.push_back('\\'); break;
                    default: throw TomlError("unsupported escape", c.line, c.col);
                }
            } else if (d == '\n') {
                throw TomlError("unterminated string", out.line, out.col);
            } else {
                s.push_back(d);
            }
        }
        if (c.eof()) throw TomlError("unterminated string", out.line, out.col);
        c.take();  // closing quote
        out.v = std::move(s);
        return out;
    }
    std::string tok;
    while (!c.eof()) {
        char d = c.peek();
        if (d == '\n' || d == ' ' || d == '\t' || d == ',' || d == ']' || d == '#') break;
        tok.push_back(c.take());
    }
    if (tok == "true") {
        out.v = true;
        return out;
    }
    if (tok == "false") {
        out.v = false;
        return out;
    }
    if (tok.empty()) throw TomlError("expected a value", out.line, out.col);
    bool looks_float = tok.find_first_of(".eE") != std::string::npos;
    try {
        size_t used = 0;
        if (looks_float) {
            double d = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument("trailing junk");
            out.v = d;
        } else {
            int64_t i = std::stoll(tok, &used);
            if (used != tok.size()) throw std::invalid_argument("trailing junk");
            out.v = i;
        }
    } catch (const std::exception&) {
        throw TomlError("bad value '" + tok + "'", out.line, out.col);
    }
    return out;
}

}  // namespace detail

inline Document parse(const std::string& text) {
    detail::Cursor c{text};
    Document doc;
    std::string section;
    while (!c.eof()) {
        c.skip_ws_inline();
        if (c.eof()) break;
        char ch = c.peek();
        if (ch == '\n') {
            c.take();
            continue;
        }
        if (ch == '#') {
            detail::skip_to_eol(c);
            continue;
        }
        if (ch == '[') {
            int line = c.line, col = c.col;
            c.take();
            std::string name = detail::parse_key(c);
            if (c.eof() || c.peek() != ']') throw TomlError("expected ']'", c.line, c.col);
            c.take();
            section = name;
            doc[section];  // ensure the section exists even if empty
            c.skip_ws_inline();
            if (!c.eof() && c.peek() == '#') detail::skip_to_eol(c);
            if (!c.eof() && c.peek() != '\n')
                throw TomlError("unexpected text after section header", line, col);
            continue;
        }
        int kline = c.line, kcol = c.col;
        std::string key = detail::parse_key(c);
        c.skip_ws_inline();
        if (c.eof() || c.peek() != '=') throw TomlError("expected '='", c.line, c.col);
        c.take();
        c.skip_ws_inline();
        Value v = detail::parse_scalar(c);
        v.line = kline;
        v.col = kcol;
        c.skip_ws_inline();
        if (!c.eof() && c.peek() == '#') detail::skip_to_eol(c);
        if (!c.eof() && c.peek() != '\n')
            throw TomlError("unexpected text after value", c.line, c.col);
        if (doc[section].count(key))
            throw TomlError("duplicate key '" + key + "'", kline, kcol);
        doc[section].emplace(key, std::move(v));
    }
    return doc;
}

}  // namespace pfncast::toml
