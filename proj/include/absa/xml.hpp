// Minimal XML reader/writer for the dataset files.
//
// Supports the subset the corpus format needs: elements, attributes,
// character data, comments, CDATA, processing instructions, a DOCTYPE
// line, and the five named entities plus numeric character references.
// Parse failures report the byte offset into the input.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace absa::xml {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct Node {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<Node> children;
  std::string text;  // concatenated character data inside this element

  // First value for the attribute, or nullptr.
  const std::string* attr(std::string_view key) const;
  std::vector<const Node*> children_named(std::string_view child_name) const;
  const Node* first_child(std::string_view child_name) const;
};

// Parses one document and returns its root element.
Node parse(std::string_view bytes);

std::string escape_text(std::string_view raw);
std::string escape_attr(std::string_view raw);

// Pretty-printed document with an XML declaration, 2-space indent.
std::string serialize(const Node& root);

}  // namespace absa::xml
