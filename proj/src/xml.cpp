#include "absa/xml.hpp"

#include <cctype>
#include <sstream>

namespace absa::xml {

ParseError::ParseError(const std::string& msg, std::size_t offset)
    : std::runtime_error(msg + " at byte offset " + std::to_string(offset)),
      offset_(offset) {}

const std::string* Node::attr(std::string_view key) const {
  for (const auto& [k, v] : attrs) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::vector<const Node*> Node::children_named(std::string_view child_name) const {
  std::vector<const Node*> out;
  for (const Node& c : children) {
    if (c.name == child_name) out.push_back(&c);
  }
  return out;
}

const Node* Node::first_child(std::string_view child_name) const {
  for (const Node& c : children) {
    if (c.name == child_name) return &c;
  }
  return nullptr;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view in) : in_(in) {}

  Node run() {
    skip_bom();
    skip_misc();
    if (eof()) throw ParseError("empty document, expected a root element", pos_);
    Node root = parse_element();
    skip_misc();
    if (!eof()) throw ParseError("trailing content after root element", pos_);
    return root;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;

  bool eof() const { return pos_ >= in_.size(); }
  char peek() const { return in_[pos_]; }
  bool starts_with(std::string_view s) const { return in_.substr(pos_, s.size()) == s; }

  void skip_bom() {
    if (starts_with("\xEF\xBB\xBF")) pos_ += 3;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r' || peek() == '\n')) ++pos_;
  }

  // Whitespace, comments, PIs, and a DOCTYPE between markup.
  void skip_misc() {
    for (;;) {
      skip_ws();
      if (starts_with("<!--")) {
        skip_comment();
      } else if (starts_with("<?")) {
        skip_until("?>", "unterminated processing instruction");
      } else if (starts_with("<!DOCTYPE")) {
        skip_until(">", "unterminated DOCTYPE");
      } else {
        return;
      }
    }
  }

  void skip_comment() {
    std::size_t start = pos_;
    pos_ += 4;
    std::size_t end = in_.find("-->", pos_);
    if (end == std::string_view::npos) throw ParseError("unterminated comment", start);
    pos_ = end + 3;
  }

  void skip_until(std::string_view marker, const char* err) {
    std::size_t start = pos_;
    std::size_t end = in_.find(marker, pos_);
    if (end == std::string_view::npos) throw ParseError(err, start);
    pos_ = end + marker.size();
  }

  static bool is_name_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':' ||
           static_cast<unsigned char>(c) >= 0x80;
  }
  static bool is_name_char(char c) {
    return is_name_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.';
  }

  std::string parse_name() {
    if (eof() || !is_name_start(peek())) throw ParseError("expected a name", pos_);
    std::size_t start = pos_;
    while (!eof() && is_name_char(peek())) ++pos_;
    return std::string(in_.substr(start, pos_ - start));
  }

  void expect(char c) {
    if (eof() || peek() != c)
      throw ParseError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  std::string decode_entity() {
    std::size_t start = pos_;
    ++pos_;  // '&'
    std::size_t end = in_.find(';', pos_);
    if (end == std::string_view::npos || end - pos_ > 10)
      throw ParseError("unterminated entity reference", start);
    std::string_view body = in_.substr(pos_, end - pos_);
    pos_ = end + 1;
    if (body == "amp") return "&";
    if (body == "lt") return "<";
    if (body == "gt") return ">";
    if (body == "quot") return "\"";
    if (body == "apos") return "'";
    if (!body.empty() && body[0] == '#') {
      long cp = -1;
      try {
        cp = (body.size() > 1 && (body[1] == 'x' || body[1] == 'X'))
                 ? std::stol(std::string(body.substr(2)), nullptr, 16)
                 : std::stol(std::string(body.substr(1)), nullptr, 10);
      } catch (const std::exception&) {
        throw ParseError("bad character reference", start);
      }
      if (cp < 0 || cp > 0x10FFFF) throw ParseError("character reference out of range", start);
      return encode_utf8(static_cast<unsigned long>(cp));
    }
    throw ParseError("unknown entity '&" + std::string(body) + ";'", start);
  }

  static std::string encode_utf8(unsigned long cp) {
    std::string out;
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
  }

  std::string parse_attr_value() {
    if (eof() || (peek() != '"' && peek() != '\'')) throw ParseError("expected a quoted attribute value", pos_);
    char quote = peek();
    ++pos_;
    std::string out;
    while (!eof() && peek() != quote) {
      if (peek() == '&') {
        out += decode_entity();
      } else if (peek() == '<') {
        throw ParseError("'<' not allowed in attribute value", pos_);
      } else {
        out.push_back(peek());
        ++pos_;
      }
    }
    if (eof()) throw ParseError("unterminated attribute value", pos_);
    ++pos_;  // closing quote
    return out;
  }

  Node parse_element() {
    std::size_t elem_start = pos_;
    expect('<');
    Node node;
    node.name = parse_name();
    for (;;) {
      skip_ws();
      if (eof()) throw ParseError("unterminated start tag", elem_start);
      if (peek() == '>') {
        ++pos_;
        parse_content(node, elem_start);
        return node;
      }
      if (starts_with("/>")) {
        pos_ += 2;
        return node;
      }
      std::string key = parse_name();
      skip_ws();
      expect('=');
      skip_ws();
      node.attrs.emplace_back(std::move(key), parse_attr_value());
    }
  }

  void parse_content(Node& node, std::size_t elem_start) {
    for (;;) {
      if (eof()) throw ParseError("missing close tag for <" + node.name + ">", elem_start);
      if (starts_with("</")) {
        std::size_t close_start = pos_;
        pos_ += 2;
        std::string name = parse_name();
        if (name != node.name)
          throw ParseError("close tag </" + name + "> does not match <" + node.name + ">",
                           close_start);
        skip_ws();
        expect('>');
        return;
      }
      if (starts_with("<!--")) {
        skip_comment();
      } else if (starts_with("<![CDATA[")) {
        std::size_t start = pos_;
        pos_ += 9;
        std::size_t end = in_.find("]]>", pos_);
        if (end == std::string_view::npos) throw ParseError("unterminated CDATA section", start);
        node.text.append(in_.substr(pos_, end - pos_));
        pos_ = end + 3;
      } else if (starts_with("<?")) {
        skip_until("?>", "unterminated processing instruction");
      } else if (peek() == '<') {
        node.children.push_back(parse_element());
      } else if (peek() == '&') {
        node.text += decode_entity();
      } else {
        node.text.push_back(peek());
        ++pos_;
      }
    }
  }
};

void write_node(std::ostringstream& out, const Node& node, int depth) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  out << indent << '<' << node.name;
  for (const auto& [k, v] : node.attrs) out << ' ' << k << "=\"" << escape_attr(v) << '"';
  if (node.children.empty() && node.text.empty()) {
    out << "/>\n";
    return;
  }
  out << '>';
  if (node.children.empty()) {
    out << escape_text(node.text) << "</" << node.name << ">\n";
    return;
  }
  out << '\n';
  for (const Node& c : node.children) write_node(out, c, depth + 1);
  out << indent << "</" << node.name << ">\n";
}

}  // namespace

Node parse(std::string_view bytes) { return Parser(bytes).run(); }

std::string escape_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string escape_attr(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#10;"; break;
      case '\t': out += "&#9;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string serialize(const Node& root) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  write_node(out, root, 0);
  return out.str();
}

}  // namespace absa::xml
