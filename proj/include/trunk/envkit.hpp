#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trunk/common.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Static scan of Python sources for directly-imported top-level packages.
// The standard-library exclusion set is pinned to Python 3.9 (the runtime
// the reference environment records), since the stdlib set drifts across
// versions.
// ---------------------------------------------------------------------------

inline constexpr const char* kPythonStdlibVersion = "3.9";

inline const std::set<std::string>& python39_stdlib() {
  static const std::set<std::string> mods = {
      "__future__", "_thread", "abc", "aifc", "argparse", "array", "ast",
      "asynchat", "asyncio", "asyncore", "atexit", "audioop", "base64",
      "bdb", "binascii", "binhex", "bisect", "builtins", "bz2", "calendar",
      "cgi", "cgitb", "chunk", "cmath", "cmd", "code", "codecs", "codeop",
      "collections", "colorsys", "compileall", "concurrent", "configparser",
      "contextlib", "contextvars", "copy", "copyreg", "cProfile", "crypt",
      "csv", "ctypes", "curses", "dataclasses", "datetime", "dbm", "decimal",
      "difflib", "dis", "distutils", "doctest", "email", "encodings",
      "ensurepip", "enum", "errno", "faulthandler", "fcntl", "filecmp",
      "fileinput", "fnmatch", "formatter", "fractions", "ftplib", "functools",
      "gc", "getopt", "getpass", "gettext", "glob", "graphlib", "grp",
      "gzip", "hashlib", "heapq", "hmac", "html", "http", "imaplib",
      "imghdr", "imp", "importlib", "inspect", "io", "ipaddress",
      "itertools", "json", "keyword", "lib2to3", "linecache", "locale",
      "logging", "lzma", "mailbox", "mailcap", "marshal", "math",
      "mimetypes", "mmap", "modulefinder", "msilib", "msvcrt",
      "multiprocessing", "netrc", "nis", "nntplib", "ntpath", "numbers",
      "operator", "optparse", "os", "ossaudiodev", "parser", "pathlib",
      "pdb", "pickle", "pickletools", "pipes", "pkgutil", "platform",
      "plistlib", "poplib", "posix", "posixpath", "pprint", "profile",
      "pstats", "pty", "pwd", "py_compile", "pyclbr", "pydoc", "queue",
      "quopri", "random", "re", "readline", "reprlib", "resource",
      "rlcompleter", "runpy", "sched", "secrets", "select", "selectors",
      "shelve", "shlex", "shutil", "signal", "site", "smtpd", "smtplib",
      "sndhdr", "socket", "socketserver", "spwd", "sqlite3", "ssl", "stat",
      "statistics", "string", "stringprep", "struct", "subprocess", "sunau",
      "symbol", "symtable", "sys", "sysconfig", "syslog", "tabnanny",
      "tarfile", "telnetlib", "tempfile", "termios", "test", "textwrap",
      "threading", "time", "timeit", "tkinter", "token", "tokenize", "trace",
      "traceback", "tracemalloc", "tty", "turtle", "turtledemo", "types",
      "typing", "unicodedata", "unittest", "urllib", "uu", "uuid", "venv",
      "warnings", "wave", "weakref", "webbrowser", "winreg", "winsound",
      "wsgiref", "xdrlib", "xml", "xmlrpc", "zipapp", "zipfile",
      "zipimport", "zlib", "zoneinfo"};
  return mods;
}

// import-name -> distribution-name; unmapped names pass through verbatim.
// User tables (YAML name: dist pairs) extend or override these.
inline std::map<std::string, std::string> default_package_map() {
  return {{"cv2", "opencv-python"}, {"PIL", "Pillow"},
          {"sklearn", "scikit-learn"}, {"skimage", "scikit-image"},
          {"yaml", "PyYAML"}, {"bs4", "beautifulsoup4"},
          {"dateutil", "python-dateutil"}};
}

struct DependencySet {
  std::set<std::string> names;  // sorted top-level external identifiers
  std::string find_links;
  std::map<std::string, std::string> pins;  // name -> version[=build]
  std::vector<std::string> warnings;        // unreadable files, dynamic imports
  std::vector<std::string> notes;           // unmapped pass-through names
};

struct ManifestReport {
  std::vector<std::string> missing;  // imported but absent from manifest
  std::vector<std::string> extra;    // in manifest but never imported
  bool gpu_hint_present = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline bool is_identifier_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline std::string first_segment(const std::string& dotted) {
  auto pos = dotted.find('.');
  return pos == std::string::npos ? dotted : dotted.substr(0, pos);
}

// collects top-level names from "a.b as c, d.e" style import lists
inline std::vector<std::string> parse_import_list(const std::string& rest) {
  std::vector<std::string> names;
  for (auto& part : split(rest, ',')) {
    std::string p = trim(part);
    if (p.empty()) continue;
    std::string name;
    for (char c : p) {
      if (is_identifier_char(c) || c == '.')
        name.push_back(c);
      else
        break;
    }
    if (!name.empty() && name[0] != '.') names.push_back(first_segment(name));
  }
  return names;
}

}  // namespace detail

// Static import scan: no code is executed; dynamic imports are reported as
// unresolvable, never guessed.
inline DependencySet scan_imports(
    const fs::path& source_root,
    const std::map<std::string, std::string>& package_map =
        default_package_map()) {
  if (!fs::exists(source_root))
    throw std::runtime_error("source root does not exist: " +
                             source_root.string());
  DependencySet deps;

  // module names defined inside the tree are internal, not dependencies
  std::set<std::string> internal;
  std::vector<fs::path> py_files;
  for (auto it = fs::recursive_directory_iterator(source_root);
       it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory()) {
      internal.insert(it->path().filename().string());
      continue;
    }
    if (it->path().extension() == ".py") {
      py_files.push_back(it->path());
      internal.insert(it->path().stem().string());
    }
  }
  std::sort(py_files.begin(), py_files.end());

  std::set<std::string> raw_names;
  for (const auto& file : py_files) {
    std::ifstream in(file);
    if (!in) {
      deps.warnings.push_back("unreadable file skipped: " + file.string());
      continue;
    }
    std::string line;
    int lineno = 0;
    bool in_triple = false;
    while (std::getline(in, line)) {
      ++lineno;
      // crude but sufficient docstring skip: toggle on lines whose quote
      // count is odd
      size_t triples = 0;
      for (size_t p = 0; (p = line.find("\"\"\"", p)) != std::string::npos;
           p += 3)
        ++triples;
      for (size_t p = 0; (p = line.find("'''", p)) != std::string::npos;
           p += 3)
        ++triples;
      if (in_triple) {
        if (triples % 2 == 1) in_triple = false;
        continue;
      }
      if (triples % 2 == 1) in_triple = true;

      std::string s = trim(line);
      auto hash = s.find('#');
      if (hash != std::string::npos) s = trim(s.substr(0, hash));
      if (s.empty()) continue;

      if (s.find("__import__(") != std::string::npos ||
          s.find("importlib.import_module(") != std::string::npos) {
        deps.warnings.push_back("unresolvable dynamic import at " +
                                file.string() + ":" + std::to_string(lineno));
        continue;
      }
      if (s.rfind("import ", 0) == 0) {
        for (const auto& n : detail::parse_import_list(s.substr(7)))
          raw_names.insert(n);
      } else if (s.rfind("from ", 0) == 0) {
        std::string rest = trim(s.substr(5));
        if (rest.empty() || rest[0] == '.') continue;  // relative: internal
        std::string name;
        for (char c : rest) {
          if (detail::is_identifier_char(c) || c == '.')
            name.push_back(c);
          else
            break;
        }
        if (!name.empty()) raw_names.insert(detail::first_segment(name));
      }
    }
  }

  for (const auto& n : raw_names) {
    if (python39_stdlib().count(n)) continue;
    if (internal.count(n)) continue;
    auto it = package_map.find(n);
    if (it != package_map.end()) {
      deps.names.insert(it->second);
    } else {
      deps.names.insert(n);
      if (!default_package_map().count(n))
        deps.notes.push_back("unmapped import passed through verbatim: " + n);
    }
  }
  return deps;
}

inline std::map<std::string, std::string> load_package_map(
    const fs::path& path) {
  auto map = default_package_map();
  YAML::Node root = YAML::LoadFile(path.string());
  for (const auto& kv : root)
    map[kv.first.as<std::string>()] = kv.second.as<std::string>();
  return map;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline std::string emit_pip_manifest(const DependencySet& deps) {
  std::string out;
  if (!deps.find_links.empty())
    out += "--find-links " + deps.find_links + "\n";
  for (const auto& n : deps.names) {
    auto pin = deps.pins.find(n);
    out += pin == deps.pins.end() ? n : n + "==" + pin->second;
    out += "\n";
  }
  return out;
}

// Listing-style conda environment: pinned entries render as
// name=version[=build]; pip_section names land under a pip: block.
inline std::string emit_conda_manifest(const DependencySet& deps,
                                       const std::string& env_name,
                                       const std::vector<std::string>& channels,
                                       const std::set<std::string>& pip_section) {
  std::string out = "name: " + env_name + "\n";
  out += "channels:\n";
  for (const auto& c : channels) out += "  - " + c + "\n";
  out += "dependencies:\n";
  for (const auto& n : deps.names) {
    if (pip_section.count(n)) continue;
    auto pin = deps.pins.find(n);
    out += "  - " + (pin == deps.pins.end() ? n : n + "=" + pin->second) + "\n";
  }
  for (const auto& [n, v] : deps.pins)
    if (!deps.names.count(n) && !pip_section.count(n))
      out += "  - " + n + "=" + v + "\n";
  if (!pip_section.empty()) {
    out += "  - pip:\n";
    for (const auto& n : pip_section) {
      auto pin = deps.pins.find(n);
      out += "    - " + (pin == deps.pins.end() ? n : n + "==" + pin->second) +
             "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation of an existing manifest against the source tree
// ---------------------------------------------------------------------------

namespace detail {

inline std::string strip_version_spec(const std::string& entry) {
  std::string name;
  for (char c : entry) {
    if (is_identifier_char(c) || c == '-' || c == '.')
      name.push_back(c);
    else
      break;
  }
  return name;
}

struct ParsedManifest {
  std::set<std::string> names;
  bool gpu_hint = false;
};

inline ParsedManifest parse_pip_manifest_text(const std::string& text) {
  ParsedManifest m;
  for (auto& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '-') {
      if (line.find("/whl/cu") != std::string::npos ||
          line.find("cuda") != std::string::npos)
        m.gpu_hint = true;
      continue;
    }
    std::string name = strip_version_spec(line);
    if (!name.empty()) m.names.insert(name);
  }
  return m;
}

inline ParsedManifest parse_conda_manifest_text(const std::string& text) {
  ParsedManifest m;
  YAML::Node root = YAML::Load(text);
  if (root["channels"]) {
    for (const auto& c : root["channels"]) {
      std::string ch = c.as<std::string>();
      if (ch == "nvidia") m.gpu_hint = true;
    }
  }
  if (root["dependencies"]) {
    for (const auto& d : root["dependencies"]) {
      if (d.IsScalar()) {
        std::string name = strip_version_spec(d.as<std::string>());
        if (name == "pytorch-cuda" || name == "cudatoolkit")
          m.gpu_hint = true;
        if (name == "python") continue;  // interpreter pin, not a dependency
        if (!name.empty()) m.names.insert(name);
      } else if (d.IsMap() && d["pip"]) {
        for (const auto& p : d["pip"]) {
          std::string name = strip_version_spec(p.as<std::string>());
          if (!name.empty()) m.names.insert(name);
        }
      }
    }
  }
  return m;
}

}  // namespace detail

inline ManifestReport validate_manifest(
    const fs::path& manifest_path, const fs::path& source_root,
    const std::map<std::string, std::string>& package_map =
        default_package_map()) {
  std::string text = read_text_file(manifest_path);
  std::string ext = manifest_path.extension().string();
  detail::ParsedManifest parsed;
  try {
    parsed = (ext == ".yaml" || ext == ".yml")
                 ? detail::parse_conda_manifest_text(text)
                 : detail::parse_pip_manifest_text(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError("unparseable manifest " + manifest_path.string() +
                          ": " + e.msg);
  }

  DependencySet imported = scan_imports(source_root, package_map);

  // conda names "pytorch" where pip imports "torch"
  auto aliases = [](const std::string& n) -> std::string {
    if (n == "pytorch") return "torch";
    return n;
  };
  std::set<std::string> manifest_names;
  for (const auto& n : parsed.names) manifest_names.insert(aliases(n));

  ManifestReport rep;
  rep.gpu_hint_present = parsed.gpu_hint;
  rep.warnings = imported.warnings;
  for (const auto& n : imported.names)
    if (!manifest_names.count(n)) rep.missing.push_back(n);
  for (const auto& n : manifest_names)
    if (!imported.names.count(n)) rep.extra.push_back(n);
  std::sort(rep.missing.begin(), rep.missing.end());
  std::sort(rep.extra.begin(), rep.extra.end());

  if (imported.names.count("torch") && !rep.gpu_hint_present)
    rep.warnings.push_back(
        "torch is imported but the manifest carries no GPU wheel hint "
        "(e.g. --find-links for a cu* index)");
  return rep;
}

inline nlohmann::json manifest_report_to_json(const ManifestReport& r) {
  nlohmann::json j;
  j["missing"] = r.missing;
  j["extra"] = r.extra;
  j["gpu_hint_present"] = r.gpu_hint_present;
  j["warnings"] = r.warnings;
  return j;
}

inline std::string manifest_report_text(const ManifestReport& r) {
  std::string out;
  out += "missing (imported but not in manifest): " +
         (r.missing.empty() ? "none" : join(r.missing, ", ")) + "\n";
  out += "extra (in manifest but never imported): " +
         (r.extra.empty() ? "none" : join(r.extra, ", ")) + "\n";
  out += std::string("gpu hint present: ") +
         (r.gpu_hint_present ? "yes" : "no") + "\n";
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace trunk
