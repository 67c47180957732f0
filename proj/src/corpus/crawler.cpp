#include "csrag/corpus/crawler.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/hash.hpp"
#include "csrag/common/io.hpp"
#include "csrag/common/text.hpp"

namespace csrag::corpus {
namespace fs = std::filesystem;
using nlohmann::json;
using std::chrono::milliseconds;

std::map<TargetGroup, std::vector<std::string>> default_keywords() {
    return {
        {TargetGroup::Poc,
         {"People of color", "Racism", "Anti-Black racism", "Systemic racism", "Racial inequality",
          "Racial equality", "Racial profiling", "White privilege", "Black Lives Matter", "Colonialism",
          "Racial discrimination", "discrimination against black people", "blacks", "race", "black women",
          "black people", "blacks hate speech", "african descent", "ethnic minorities", "ethnic inequalities",
          "minority"}},
        {TargetGroup::Lgbt,
         {"LGBT rights", "Homophobia", "Transphobia", "Biphobia", "Gender identity", "Conversion therapy",
          "Same-sex marriage", "Stonewall riots", "LGBT", "LGBTQIA+", "Gay", "Lesbian", "Transgender",
          "Non-binary", "LGBT hate speech", "discrimination against LGBT people", "gay rights movement",
          "LGBT discrimination", "LGBT hate crimes", "sexual orientation", "HIV/AIDS & gay/lesbian"}},
        {TargetGroup::Disabled,
         {"Disability rights", "Accessibility", "Social model of disability", "disability", "disabled",
          "down syndrome", "autism", "mental disability", "physical disability", "neurodiversity", "ableism",
          "inclusive design", "Discrimination against people with disabilities"}},
        {TargetGroup::Muslims,
         {"Islamophobia", "Discrimination against Muslims", "Anti-Muslim hate crimes", "Muslim communities",
          "Religious discrimination", "islam", "muslim", "muslim hate speech", "religion",
          "discrimination against muslims", "muslim communities"}},
        {TargetGroup::Jews,
         {"Antisemitism", "Jewish identity", "Anti-Jewish violence", "Nazi propaganda", "jews",
          "jews hate speech", "antisemitism hate speech", "judaism", "hebrews", "jews hate crimes",
          "jewish history", "jewish diaspora", "zionism", "zionist movement", "holocaust", "israel",
          "holocaust denial"}},
        {TargetGroup::Women,
         {"Sexism", "Misogyny", "Feminism", "Gender inequality", "Women's rights", "Me Too movement",
          "Gender-based violence", "women", "women hate speech", "feminism", "violence against women",
          "gender inequality", "glass ceiling", "discrimination against women"}},
        {TargetGroup::Migrants,
         {"Xenophobia", "Anti-immigration", "Refugee crisis", "Asylum seekers", "Undocumented immigrants",
          "Immigration law", "refugee", "migrants", "immigrants", "immigration", "migration",
          "immigration hate speech", "migrants rights", "illegal aliens", "immigration and crime",
          "immigration and unemployment", "discrimination against migrants", "aliens"}},
        {TargetGroup::Other,
         {"hate speech", "hate speech laws", "hate crime", "hate crime legislation", "hate speech regulation",
          "hate speech prevention", "online hate speech", "online harassment", "cyberbullying", "censorship",
          "freedom of expression", "speech ethics", "disinformation", "radicalization", "extremism",
          "online moderation", "human rights", "human rights treaties", "universal declaration of human rights",
          "international human rights law", "civil rights", "social justice", "equality before the law",
          "international court of justice", "refugee rights", "minority rights", "gender equality law",
          "european charter of human rigths"}},
    };
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("crawl spec: field `") + key + "` has the wrong type");
    }
}

std::string url_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (const char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(c);
        } else {
            out.push_back('%');
            out.push_back(kHex[u >> 4]);
            out.push_back(kHex[u & 0xF]);
        }
    }
    return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

std::string extension_of(std::string_view url) {
    auto path = url.substr(0, url.find_first_of("?#"));
    path = path.substr(path.rfind('/') + 1);
    const auto dot = path.rfind('.');
    if (dot == std::string_view::npos) return ".bin";
    const auto ext = path.substr(dot + 1);
    if (ext.empty() || ext.size() > 5 ||
        !std::all_of(ext.begin(), ext.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); }))
        return ".bin";
    return "." + text::to_lower_ascii(ext);
}

/// Enforces a minimum spacing between request starts to the same origin.
class Politeness {
  public:
    Politeness(milliseconds delay, const Sleeper& sleep) : delay_(delay), sleep_(sleep) {}

    void wait(const std::string& origin) {
        if (delay_.count() <= 0) return;
        milliseconds wait{0};
        {
            std::lock_guard lock(mu_);
            const auto now = std::chrono::steady_clock::now();
            auto& next = next_slot_[origin];
            if (next > now) wait = std::chrono::duration_cast<milliseconds>(next - now);
            next = std::max(next, now) + delay_;
        }
        if (wait.count() > 0) sleep_(wait);
    }

  private:
    milliseconds delay_;
    const Sleeper& sleep_;
    std::mutex mu_;
    std::map<std::string, std::chrono::steady_clock::time_point> next_slot_;
};

struct Crawl {
    const CrawlSpec& spec;
    fs::path out_dir;
    http::Getter& getter;
    Sleeper sleep;
    Politeness politeness;
    FetchReport report;
    std::mutex mu;  // guards report, known_urls and the manifest/error files
    std::set<std::string> known_urls;
    std::atomic<std::size_t> listing_requests{0};
    std::atomic<std::size_t> document_requests{0};

    Crawl(const CrawlSpec& s, fs::path dir, http::Getter& g, Sleeper sl)
        : spec(s), out_dir(std::move(dir)), getter(g), sleep(std::move(sl)), politeness(s.delay, sleep) {}

    std::optional<std::string> fetch(const std::string& url, std::atomic<std::size_t>& counter) {
        std::string reason;
        int attempts = 0;
        const auto origin = http::split_url(url).origin;
        for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
            politeness.wait(origin);
            ++attempts;
            ++counter;
            auto res = getter.get(url);
            if (res.status >= 200 && res.status < 300) return std::move(res.body);
            reason = res.status == 0 ? "transport error: " + res.error : "HTTP " + std::to_string(res.status);
            const bool transient = res.status == 0 || res.status == 429 || res.status >= 500;
            if (!transient) break;
            if (attempt < spec.max_retries) sleep(spec.backoff * (1LL << attempt));
        }
        std::lock_guard lock(mu);
        report.errors.push_back({url, attempts, reason});
        io::append_file(out_dir / "fetch_errors.jsonl",
                        io::to_jsonl_line({{"url", url}, {"attempts", attempts}, {"reason", reason}}));
        return std::nullopt;
    }

    bool download(const std::string& url, const CrawlSource& src, TargetGroup target, const std::string& type,
                  int year) {
        auto body = fetch(url, document_requests);
        if (!body) return false;
        DocumentMeta m;
        m.id = text::to_lower_ascii(to_string(src.source)) + "-" + hex64(fnv1a64(url));
        m.fname = std::string(to_string(target)) + "/" + m.id + extension_of(url);
        m.target = target;
        m.doc_type = type;
        m.year = year;
        m.url = url;
        m.source = src.source;
        io::write_file_atomic(out_dir / m.fname, *body);
        std::lock_guard lock(mu);
        if (!known_urls.insert(url).second) return true;
        io::append_file(out_dir / "manifest.csv", manifest_row(m));
        report.manifest.push_back(std::move(m));
        ++report.new_documents;
        return true;
    }

    bool download_all(const std::vector<std::string>& urls, const CrawlSource& src, TargetGroup target,
                      const std::string& type, int year) {
        std::atomic<std::size_t> next{0};
        std::atomic<bool> all_ok{true};
        auto worker = [&] {
            for (std::size_t i = next++; i < urls.size(); i = next++)
                if (!download(urls[i], src, target, type, year)) all_ok = false;
        };
        const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(spec.max_in_flight_per_host, 1),
                                                          urls.size());
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
        pool.clear();
        return all_ok;
    }

    void run() {
        fs::create_directories(out_dir);
        const auto manifest_path = out_dir / "manifest.csv";
        if (fs::exists(manifest_path)) {
            report.manifest = read_manifest(manifest_path);
        } else {
            io::write_file_atomic(manifest_path, manifest_header());
        }
        for (const auto& m : report.manifest) known_urls.insert(m.url);

        std::set<std::string> done;
        const auto done_path = out_dir / "listings_done.txt";
        if (fs::exists(done_path)) {
            const auto data = io::read_file(done_path);
            std::size_t pos = 0;
            while (pos < data.size()) {
                auto nl = data.find('\n', pos);
                if (nl == std::string::npos) nl = data.size();
                done.insert(data.substr(pos, nl - pos));
                pos = nl + 1;
            }
        }

        const std::vector<std::string> types = spec.doc_types.empty() ? std::vector<std::string>{""} : spec.doc_types;
        for (const auto& src : spec.sources) {
            const std::regex link_re(src.link_pattern);
            for (const auto& [target, keywords] : spec.keywords) {
                for (const auto& keyword : keywords) {
                    for (const auto& type : types) {
                        for (int year = spec.years.min; year <= spec.years.max; ++year) {
                            for (int p = 0; p < src.max_pages; ++p) {
                                std::string url = src.listing_url;
                                replace_all(url, "{keyword}", url_encode(keyword));
                                replace_all(url, "{type}", url_encode(type));
                                replace_all(url, "{year}", std::to_string(year));
                                replace_all(url, "{page}", std::to_string(src.first_page + p * src.page_step));
                                if (done.count(url)) continue;
                                const auto listing = fetch(url, listing_requests);
                                if (!listing) break;

                                std::vector<std::string> links;
                                std::set<std::string> unique;
                                for (std::sregex_iterator it(listing->begin(), listing->end(), link_re), end;
                                     it != end; ++it) {
                                    if (it->size() < 2) continue;
                                    auto link = http::resolve_url(url, (*it)[1].str());
                                    if (unique.insert(link).second) links.push_back(std::move(link));
                                }
                                if (links.empty()) break;  // past the last result page

                                std::vector<std::string> fresh;
                                {
                                    std::lock_guard lock(mu);
                                    for (auto& l : links)
                                        if (!known_urls.count(l)) fresh.push_back(l);
                                }
                                if (download_all(fresh, src, target, type.empty() ? "document" : type, year)) {
                                    io::append_file(done_path, url + "\n");
                                    done.insert(url);
                                }
                            }
                        }
                    }
                }
            }
        }
        report.listing_requests = listing_requests;
        report.document_requests = document_requests;
    }
};

}  // namespace

CrawlSpec parse_crawl_spec(const json& j) {
    if (!j.is_object()) throw ValidationError("crawl spec must be a JSON object");
    CrawlSpec spec;
    const auto sources = j.find("sources");
    if (sources == j.end() || !sources->is_array()) throw ValidationError("crawl spec: `sources` must be an array");
    for (const auto& s : *sources) {
        if (!s.is_object()) throw ValidationError("crawl spec: each source must be an object");
        CrawlSource src;
        const auto name = get_or<std::string>(s, "source", "");
        const auto parsed = parse_source(name);
        if (!parsed) throw ValidationError("crawl spec: unknown source `" + name + "`");
        src.source = *parsed;
        src.listing_url = get_or<std::string>(s, "listing_url", "");
        if (src.listing_url.empty()) throw ValidationError("crawl spec: source `" + name + "` lacks `listing_url`");
        http::split_url(src.listing_url);
        src.link_pattern = get_or<std::string>(s, "link_pattern", src.link_pattern);
        try {
            const std::regex check(src.link_pattern);
            if (check.mark_count() < 1) throw ValidationError("crawl spec: `link_pattern` needs a capture group");
        } catch (const std::regex_error& e) {
            throw ValidationError(std::string("crawl spec: invalid `link_pattern`: ") + e.what());
        }
        src.first_page = get_or<int>(s, "first_page", 1);
        src.page_step = get_or<int>(s, "page_step", 1);
        src.max_pages = get_or<int>(s, "max_pages", 1);
        if (src.max_pages < 1 || src.page_step < 1) throw ValidationError("crawl spec: paging values must be >= 1");
        spec.sources.push_back(std::move(src));
    }

    const auto kw = j.find("keywords");
    if (kw == j.end()) {
        spec.keywords = default_keywords();
    } else {
        if (!kw->is_object()) throw ValidationError("crawl spec: `keywords` must map target groups to lists");
        for (const auto& [name, list] : kw->items()) {
            const auto target = parse_target(name);
            if (!target) throw ValidationError("crawl spec: unknown target group `" + name + "`");
            if (!list.is_array()) throw ValidationError("crawl spec: keywords for `" + name + "` must be a list");
            auto& dst = spec.keywords[*target];
            for (const auto& k : list) {
                if (!k.is_string()) throw ValidationError("crawl spec: keywords must be strings");
                dst.push_back(k.get<std::string>());
            }
        }
    }
    spec.doc_types = get_or<std::vector<std::string>>(j, "doc_types", {});
    spec.years.min = get_or<int>(j, "year_min", 2000);
    spec.years.max = get_or<int>(j, "year_max", 2025);
    if (spec.years.min > spec.years.max) throw ValidationError("crawl spec: year_min > year_max");
    spec.delay = milliseconds(get_or<long>(j, "delay_ms", 1000));
    spec.max_retries = get_or<int>(j, "max_retries", 3);
    spec.backoff = milliseconds(get_or<long>(j, "backoff_ms", 500));
    spec.max_in_flight_per_host = get_or<std::size_t>(j, "max_in_flight_per_host", 4);
    spec.timeout = milliseconds(get_or<long>(j, "timeout_ms", 30000));
    if (spec.max_retries < 0 || spec.delay.count() < 0 || spec.backoff.count() < 0 || spec.timeout.count() <= 0)
        throw ValidationError("crawl spec: retries, delays and timeout must be non-negative (timeout > 0)");
    return spec;
}

FetchReport fetch_documents(const CrawlSpec& spec, const fs::path& out_dir, http::Getter& getter,
                            const Sleeper& sleep) {
    Sleeper sleeper = sleep ? sleep : Sleeper([](milliseconds d) { std::this_thread::sleep_for(d); });
    Crawl crawl(spec, out_dir, getter, std::move(sleeper));
    crawl.run();
    return std::move(crawl.report);
}

std::string manifest_header() { return "id,fname,target,type,year,url,source\n"; }

std::string manifest_row(const DocumentMeta& m) {
    return csv::format_row({m.id, m.fname, std::string(to_string(m.target)), m.doc_type, std::to_string(m.year),
                            m.url, std::string(to_string(m.source))});
}

std::vector<DocumentMeta> read_manifest(const fs::path& path) {
    const auto table = csv::Table::parse(io::read_file(path));
    std::vector<DocumentMeta> out;
    for (const auto& row : table.rows()) {
        if (row.size() < 7) continue;  // torn final line from an interrupted run
        DocumentMeta m;
        m.id = table.get(row, "id");
        m.fname = table.get(row, "fname");
        m.target = parse_target(table.get(row, "target")).value_or(TargetGroup::Other);
        m.doc_type = table.get(row, "type");
        try {
            m.year = std::stoi(table.get(row, "year"));
        } catch (const std::exception&) {
            continue;
        }
        m.url = table.get(row, "url");
        m.source = parse_source(table.get(row, "source")).value_or(Source::Custom);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace csrag::corpus
