#include "msp/textfront/textfront.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace msp::text {
namespace {

constexpr std::string_view kPunctuation = ".,!?;:'\"-()";

constexpr std::string_view kBuiltinTable =
    "version\t1\n"
    "a\t3\nb\t4\nc\t5\nd\t6\ne\t7\nf\t8\ng\t9\nh\t10\ni\t11\nj\t12\nk\t13\nl\t14\nm\t15\n"
    "n\t16\no\t17\np\t18\nq\t19\nr\t20\ns\t21\nt\t22\nu\t23\nv\t24\nw\t25\nx\t26\ny\t27\nz\t28\n"
    "0\t29\n1\t30\n2\t31\n3\t32\n4\t33\n5\t34\n6\t35\n7\t36\n8\t37\n9\t38\n";

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Decodes one UTF-8 sequence starting at s[i] and advances i past it.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i++]);
  const int extra = b0 >= 0xf0 ? 3 : b0 >= 0xe0 ? 2 : b0 >= 0xc0 ? 1 : 0;
  char32_t cp = extra == 3 ? (b0 & 0x07u) : extra == 2 ? (b0 & 0x0fu) : extra == 1 ? (b0 & 0x1fu) : b0;
  for (int k = 0; k < extra && i < s.size() && (static_cast<unsigned char>(s[i]) & 0xc0u) == 0x80u; ++k, ++i) {
    cp = (cp << 6) | (static_cast<unsigned char>(s[i]) & 0x3fu);
  }
  return cp;
}

std::string format_codepoint(char32_t cp) {
  std::ostringstream os;
  os << "U+" << std::hex << std::uppercase;
  os.width(4);
  os.fill('0');
  os << static_cast<std::uint32_t>(cp);
  return os.str();
}

}  // namespace

Transcript::Transcript(std::string_view raw) : text_(raw), normalized_(normalize(raw)) {}

std::string Transcript::normalize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

const RuleTable& RuleTable::builtin() {
  static const RuleTable table = parse(kBuiltinTable);
  return table;
}

RuleTable RuleTable::parse(std::string_view text) {
  RuleTable t;
  t.ids_.fill(-1);
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  int max_id = kWordBoundary;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw CorruptDataError("g2p rule table line " + std::to_string(line_no) + ": missing TAB");
    }
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    int id = 0;
    try {
      id = std::stoi(value);
    } catch (const std::exception&) {
      throw CorruptDataError("g2p rule table line " + std::to_string(line_no) + ": bad id '" + value + "'");
    }
    if (key == "version") {
      t.version_ = id;
      continue;
    }
    if (key.size() != 1 || static_cast<unsigned char>(key[0]) >= 0x80 || !std::isalnum(key[0]) ||
        std::isupper(key[0])) {
      throw CorruptDataError("g2p rule table line " + std::to_string(line_no) + ": grapheme must be one lowercase "
                             "letter or digit");
    }
    if (id <= kWordBoundary) {
      throw CorruptDataError("g2p rule table line " + std::to_string(line_no) + ": id collides with reserved symbols");
    }
    t.ids_[static_cast<unsigned char>(key[0])] = id;
    max_id = std::max(max_id, id);
  }
  if (t.version_ == 0) {
    throw CorruptDataError("g2p rule table: missing version line");
  }
  t.vocabulary_size_ = max_id + 1;
  return t;
}

RuleTable RuleTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open g2p rule table " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

int RuleTable::lookup(char grapheme) const noexcept {
  const auto c = static_cast<unsigned char>(grapheme);
  return c < 128 ? ids_[c] : -1;
}

PhonemeSequence g2p(const Transcript& t, const RuleTable& table) {
  PhonemeSequence seq;
  seq.vocabulary_size = table.vocabulary_size();
  std::vector<char32_t> bad;
  const std::string_view s = t.normalized();
  for (std::size_t i = 0; i < s.size();) {
    const char ch = s[i];
    if (static_cast<unsigned char>(ch) >= 0x80) {
      bad.push_back(decode_utf8(s, i));
      continue;
    }
    ++i;
    if (ch == ' ') {
      if (!seq.ids.empty() && seq.ids.back() != kWordBoundary) seq.ids.push_back(kWordBoundary);
      continue;
    }
    if (kPunctuation.find(ch) != std::string_view::npos) continue;
    const int id = table.lookup(ch);
    if (id < 0) {
      bad.push_back(static_cast<unsigned char>(ch));
      continue;
    }
    seq.ids.push_back(id);
  }
  if (!bad.empty()) {
    std::string msg = "g2p: unsupported character(s):";
    for (char32_t cp : bad) msg += " " + format_codepoint(cp);
    throw UnsupportedCharacterError(msg, std::move(bad));
  }
  if (!seq.ids.empty() && seq.ids.back() == kWordBoundary) seq.ids.pop_back();
  return seq;
}

TextPrompt build_text_prompt(const Transcript& prompt_transcript, const Transcript& target_text,
                             const RuleTable& table) {
  TextPrompt out;
  PhonemeSequence prompt = g2p(prompt_transcript, table);
  PhonemeSequence target = g2p(target_text, table);
  out.phonemes.vocabulary_size = table.vocabulary_size();
  if (prompt.empty()) {
    out.phonemes.ids = std::move(target.ids);
    out.prompt_len = 0;
    return out;
  }
  out.prompt_len = prompt.size();
  out.phonemes.ids = std::move(prompt.ids);
  out.phonemes.ids.push_back(kWordBoundary);
  out.phonemes.ids.insert(out.phonemes.ids.end(), target.ids.begin(), target.ids.end());
  return out;
}

}  // namespace msp::text
