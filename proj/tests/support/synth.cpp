#include "synth.hpp"

#include <algorithm>

namespace synth {

using graalf::NodeKind;
using graalf::ResourceRef;

namespace {

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Actor {
  std::int64_t pid = 0;
  std::int64_t ppid = 1;
  std::optional<std::int64_t> tid;
  std::optional<std::string> unit;
  std::string comm;
  std::string pcomm;
};

EventRecord make(const Actor& a, Timestamp ts, std::string syscall, ResourceRef res) {
  EventRecord r;
  r.host = graalf::HostId("victim");
  r.ts = ts;
  r.syscall = std::move(syscall);
  r.pid = a.pid;
  r.ppid = a.ppid;
  r.tid = a.tid;
  r.unit_id = a.unit;
  r.comm = a.comm;
  r.pcomm = a.pcomm;
  r.resource = std::move(res);
  return r;
}

ResourceRef file(std::string path) { return {NodeKind::File, std::move(path), std::nullopt}; }
ResourceRef sock(std::string ep) { return {NodeKind::Socket, std::move(ep), std::nullopt}; }

}  // namespace

std::vector<EventRecord> random_stream(std::uint64_t seed, int max_nodes, int max_events) {
  Rng rng(seed);
  // Subjects: P processes plus one external parent, up to 2 threads each and
  // up to 2 units per thread.
  const int procs = pick(rng, 2, 10);
  std::vector<Actor> subjects;
  for (int i = 0; i < procs; ++i) {
    Actor base;
    base.pid = 1000 + i;
    const int parent = i == 0 ? -1 : pick(rng, -1, i - 1);
    base.ppid = parent < 0 ? 1 : 1000 + parent;
    base.comm = "p" + std::to_string(i);
    base.pcomm = parent < 0 ? "init" : "p" + std::to_string(parent);
    const int threads = pick(rng, 1, 2);
    for (int t = 0; t < threads; ++t) {
      Actor th = base;
      if (t > 0 || pick(rng, 0, 1)) th.tid = base.pid * 10 + t;
      const int units = pick(rng, 1, 2);
      for (int u = 0; u < units; ++u) {
        Actor un = th;
        if (u > 0 || pick(rng, 0, 1)) un.unit = std::to_string(u + 1);
        subjects.push_back(un);
      }
    }
  }
  // Upper bound on subject nodes: processes + parent + threads + units.
  const int subject_nodes = procs + 1 + 2 * static_cast<int>(subjects.size());
  const int resources = std::max(2, std::min(pick(rng, 3, 60), max_nodes - subject_nodes));
  std::vector<ResourceRef> pool;
  for (int k = 0; k < resources; ++k) {
    switch (pick(rng, 0, 5)) {
      case 0: pool.push_back(sock("10.0.0." + std::to_string(k) + ":80")); break;
      case 1: pool.push_back({NodeKind::Pipe, "pipe:[" + std::to_string(k) + "]", std::nullopt}); break;
      default: pool.push_back(file("/r/f" + std::to_string(k))); break;
    }
  }
  // Skew towards a few hot subjects/resources so keys repeat.
  auto skewed = [&](int n) {
    const int a = pick(rng, 0, n - 1);
    const int b = pick(rng, 0, n - 1);
    return std::min(a, b);
  };
  const int events = pick(rng, 10, max_events);
  std::vector<EventRecord> out;
  Timestamp ts = 1'000'000;
  for (int i = 0; i < events; ++i) {
    ts += pick(rng, 0, 2);  // ties are allowed
    const auto& who = subjects[skewed(static_cast<int>(subjects.size()))];
    const auto& res = pool[skewed(static_cast<int>(pool.size()))];
    const bool into = pick(rng, 0, 1) == 0;
    std::string sc;
    if (res.kind == NodeKind::Socket) {
      sc = into ? "recvfrom" : "sendto";
    } else {
      static const char* reads[] = {"read", "readv", "pread"};
      static const char* writes[] = {"write", "writev", "pwrite"};
      sc = into ? reads[pick(rng, 0, 2)] : writes[pick(rng, 0, 2)];
    }
    auto rec = make(who, ts, sc, res);
    rec.host = graalf::HostId();
    out.push_back(std::move(rec));
  }
  return out;
}

RawLog raw_log(const std::vector<EventRecord>& records) {
  RawLog log;
  graalf::EventProcessor proc;
  for (const auto& r : records) {
    auto res = proc.process(r);
    if (!res.graph) continue;
    for (const auto& n : res.graph->nodes) log.nodes.emplace(n.sig, n);
    for (const auto& e : res.graph->edges) log.events.push_back(e);
  }
  return log;
}

std::set<SignatureKey> oracle_closure(const RawLog& log, const std::set<SignatureKey>& seeds,
                                      TraceDirection dir, CompressionLevel level,
                                      const std::optional<std::string>& syscall) {
  const bool back = dir == TraceDirection::Back;
  struct Item {
    SignatureKey src, dst;
    bool hierarchy;
    std::string name;
    Timestamp lo, hi;  // lo == hi for single events
  };
  std::vector<Item> items;
  if (level == CompressionLevel::C2) {
    std::map<graalf::EdgeKey, std::pair<Timestamp, Timestamp>> span;
    for (const auto& e : log.events) {
      auto [it, fresh] = span.try_emplace(graalf::key_of(e), e.first(), e.first());
      it->second.first = std::min(it->second.first, e.first());
      it->second.second = std::max(it->second.second, e.first());
    }
    for (const auto& [k, s] : span) {
      items.push_back({k.src, k.dst, k.rel.is_hierarchy(), k.rel.syscall_name(), s.first, s.second});
    }
  } else {
    for (const auto& e : log.events) {
      items.push_back({e.src, e.dst, e.rel.is_hierarchy(), e.rel.syscall_name(), e.first(),
                       e.first()});
    }
  }

  std::map<SignatureKey, Timestamp> best;
  for (const auto& s : seeds) best[s] = back ? graalf::kTimeMax : graalf::kTimeMin;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& it : items) {
      const auto& from = back ? it.dst : it.src;
      const auto& to = back ? it.src : it.dst;
      auto f = best.find(from);
      if (f == best.end()) continue;
      const Timestamp ref = f->second;
      Timestamp next;
      if (it.hierarchy) {
        next = ref;
      } else if (syscall && it.name != *syscall) {
        continue;
      } else if (level == CompressionLevel::C3) {
        next = back ? graalf::kTimeMax : graalf::kTimeMin;
      } else if (level == CompressionLevel::C2) {
        if (back) {
          if (it.lo > ref) continue;
          next = std::min(it.hi, ref);
        } else {
          if (it.hi < ref) continue;
          next = std::max(it.lo, ref);
        }
      } else {
        if (back ? it.lo > ref : it.lo < ref) continue;
        next = it.lo;
      }
      auto t = best.find(to);
      if (t == best.end()) {
        best.emplace(to, next);
        changed = true;
      } else if (back ? next > t->second : next < t->second) {
        t->second = next;
        changed = true;
      }
    }
  }
  std::set<SignatureKey> out;
  for (const auto& [k, v] : best) out.insert(k);
  return out;
}

std::set<SignatureKey> nodes_titled(const RawLog& log, const std::string& title,
                                    std::optional<NodeKind> kind) {
  std::set<SignatureKey> out;
  for (const auto& [sig, n] : log.nodes) {
    if (n.title == title && (!kind || sig.kind == *kind)) out.insert(sig);
  }
  return out;
}

void load(graalf::MemoryStore& store, const std::vector<EventRecord>& records) {
  graalf::EventProcessor proc;
  for (const auto& r : records) {
    auto res = proc.process(r);
    if (res.graph) store.insert(*res.graph);
  }
}

const std::vector<std::string>& corpus_queries() {
  static const std::vector<std::string> q = {
      "back select * from soc where name has 128.55.12.167:4343",
      "back select * from * where name is /dropbearLinux/dropbear;",
      "forward select * from * where name is tar and pid is 13899;",
      "back select * from * where name is dropbearLINUX.tar;",
      "forward select * from * where name is scp and pid is 13870;",
      "select * from file where name has /important-files/",
      "back select * from * where name is /important-files/plan-file.cad;",
      "forward select * from soc where name is scp and pid is 4667;",
      "select * from * where name is myshell.sh",
      "back select * from * where name is myshell.sh;",
      "forward select * from * where pid is 24456 and name is sh;",
      "back select write from * where file name has /home /user1/Downloads/ and date has "
      "2019-09-03",
      "forward select * from * where name is /home/user1/Down-loads/dash",
  };
  return q;
}

const std::vector<std::string>& executable_queries() {
  static const std::vector<std::string> q = [] {
    auto v = corpus_queries();
    v[11] = "back select write from * where file name has /home/user1/Downloads/ and date has "
            "2019-09-03";
    v[12] = "forward select * from * where name is /home/user1/Downloads/dash";
    return v;
  }();
  return q;
}

std::vector<EventRecord> case_study_workload(std::size_t total, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EventRecord> scenario;
  auto at = [](double hour) { return kDay + static_cast<Timestamp>(hour * 3600e6); };
  const ResourceRef libc = file("/usr/lib/x86_64-linux-gnu/libc.so.6");

  // Malicious drop: scp fetches a tarball from the attacker, tar unpacks it,
  // the dropped dropbear binary is started.
  Actor sshd{900, 1, 900, std::nullopt, "sshd", "systemd"};
  Actor bash{13850, 900, 13850, std::nullopt, "bash", "sshd"};
  Actor scp{13870, 13850, 13870, std::nullopt, "scp", "bash"};
  Actor tar{13899, 13850, 13899, std::nullopt, "tar", "bash"};
  Actor dropbear{13950, 13850, 13950, std::nullopt, "dropbear", "bash"};
  const auto attacker = sock("128.55.12.167:4343");
  scenario.push_back(make(sshd, at(9.00), "recvfrom", sock("10.0.0.5:22")));
  scenario.push_back(make(bash, at(9.01), "read", libc));
  scenario.push_back(make(scp, at(9.02), "read", libc));
  scenario.push_back(make(scp, at(9.03), "sendto", attacker));
  scenario.push_back(make(scp, at(9.04), "recvfrom", attacker));
  scenario.push_back(make(scp, at(9.05), "recvfrom", attacker));
  scenario.push_back(make(scp, at(9.06), "write", file("dropbearLINUX.tar")));
  scenario.push_back(make(scp, at(9.07), "write", file("dropbearLINUX.tar")));
  scenario.push_back(make(tar, at(9.10), "read", file("dropbearLINUX.tar")));
  scenario.push_back(make(tar, at(9.11), "write", file("/dropbearLinux/dropbear")));
  scenario.push_back(make(tar, at(9.12), "write", file("/dropbearLinux/dropbearkey")));
  scenario.push_back(make(tar, at(9.13), "write", file("/dropbearLinux/README")));
  scenario.push_back(make(dropbear, at(9.20), "read", file("/dropbearLinux/dropbear")));
  scenario.push_back(make(dropbear, at(9.21), "read", file("/dropbearLinux/dropbearkey")));
  scenario.push_back(make(dropbear, at(9.22), "accept", sock("0.0.0.0:2222")));
  scenario.push_back(make(dropbear, at(9.23), "write", file("/var/log/dropbear.log")));

  // Exfiltration: an editor saves the plan, scp ships it out.
  Actor vim{4500, 4400, 4500, std::nullopt, "vim", "bash"};
  Actor scp2{4667, 4400, 4667, std::nullopt, "scp", "bash"};
  scenario.push_back(make(vim, at(11.0), "read", libc));
  scenario.push_back(make(vim, at(11.1), "write", file("/important-files/plan-file.cad")));
  scenario.push_back(make(vim, at(11.2), "write", file("/important-files/budget.xls")));
  scenario.push_back(make(scp2, at(12.0), "read", file("/important-files/plan-file.cad")));
  scenario.push_back(make(scp2, at(12.1), "sendto", sock("128.55.12.200:22")));
  scenario.push_back(make(scp2, at(12.2), "sendto", sock("128.55.12.200:22")));

  // FTP: an uploaded script is executed by sh, which opens a shell socket.
  Actor ftpd{24400, 1, 24400, std::nullopt, "vsftpd", "systemd"};
  Actor sh{24456, 24400, 24456, std::nullopt, "sh", "vsftpd"};
  scenario.push_back(make(ftpd, at(14.0), "recvfrom", sock("10.0.0.66:21")));
  scenario.push_back(make(ftpd, at(14.1), "write", file("myshell.sh")));
  scenario.push_back(make(sh, at(14.5), "read", file("myshell.sh")));
  scenario.push_back(make(sh, at(14.6), "write", file("/tmp/out.txt")));
  scenario.push_back(make(sh, at(14.7), "connect", sock("10.0.0.66:4444")));
  scenario.push_back(make(sh, at(14.8), "sendto", sock("10.0.0.66:4444")));

  // Downloads policy: the browser saves a binary which is then run.
  Actor firefox{5100, 5000, 5101, std::nullopt, "firefox", "gnome-shell"};
  Actor dash{5200, 5000, 5200, std::nullopt, "dash", "gnome-shell"};
  scenario.push_back(make(firefox, at(16.0), "recvfrom", sock("93.184.216.34:443")));
  scenario.push_back(make(firefox, at(16.1), "write", file("/home/user1/Downloads/dash")));
  scenario.push_back(make(firefox, at(16.2), "write", file("/home/user1/Downloads/report.pdf")));
  scenario.push_back(make(dash, at(16.5), "read", file("/home/user1/Downloads/dash")));
  scenario.push_back(make(dash, at(16.6), "write", file("/tmp/.cache-x")));
  scenario.push_back(make(dash, at(16.7), "connect", sock("93.184.216.99:8080")));

  std::sort(scenario.begin(), scenario.end(),
            [](const auto& a, const auto& b) { return a.ts < b.ts; });

  // Background: long-lived services with private working sets, a shared
  // data area, and read-only libraries.
  const std::size_t noise = total > scenario.size() ? total - scenario.size() : 0;
  const int nprocs = 400;
  static const char* names[] = {"python3", "java", "nginx", "postgres", "cron",
                                "rsyslogd", "node", "redis-server"};
  std::vector<Actor> actors;
  for (int i = 0; i < nprocs; ++i) {
    Actor a;
    a.pid = 30000 + i;
    a.ppid = 1;
    a.comm = names[i % 8];
    a.pcomm = "systemd";
    actors.push_back(a);
  }
  const ResourceRef libs[] = {libc, file("/usr/lib/locale/locale-archive"),
                              file("/etc/ld.so.cache")};
  std::vector<EventRecord> out;
  out.reserve(total);
  std::size_t si = 0;
  const double step = 86400e6 / static_cast<double>(std::max<std::size_t>(noise, 1));
  for (std::size_t i = 0; i < noise; ++i) {
    const Timestamp ts = kDay + static_cast<Timestamp>(static_cast<double>(i) * step);
    while (si < scenario.size() && scenario[si].ts <= ts) out.push_back(scenario[si++]);
    Actor a = actors[rng() % nprocs];
    a.tid = a.pid * 4 + static_cast<std::int64_t>(rng() % 3);
    if (rng() % 2) a.unit = std::to_string(i / 5000);
    const int r = pick(rng, 0, 99);
    if (r < 10) {
      out.push_back(make(a, ts, "read", libs[rng() % 3]));
    } else if (r < 60) {
      const auto path = "/var/lib/" + a.comm + "/" + std::to_string(a.pid) + "/f" +
                        std::to_string(rng() % 20);
      out.push_back(make(a, ts, r < 35 ? "read" : "write", file(path)));
    } else if (r < 85) {
      const auto path = "/srv/shared/s" + std::to_string(rng() % 2000);
      out.push_back(make(a, ts, r < 78 ? "read" : "write", file(path)));
    } else {
      const auto ep = "10.1." + std::to_string(rng() % 8) + "." + std::to_string(rng() % 250) +
                      ":" + std::to_string(5432 + rng() % 4);
      out.push_back(make(a, ts, r < 93 ? "recvfrom" : "sendto", sock(ep)));
    }
  }
  while (si < scenario.size()) out.push_back(scenario[si++]);
  return out;
}

std::vector<EventRecord> long_running_workload(std::size_t total, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Actor> services;
  static const char* names[] = {"sshd", "cron", "rsyslogd", "nginx", "postgres", "dockerd"};
  for (int i = 0; i < 24; ++i) {
    Actor a;
    a.pid = 2000 + i;
    a.ppid = 1;
    a.tid = a.pid;
    a.comm = names[i % 6];
    a.pcomm = "systemd";
    services.push_back(a);
  }
  std::vector<EventRecord> out;
  out.reserve(total);
  const double step = 48 * 3600e6 / static_cast<double>(std::max<std::size_t>(total, 1));
  for (std::size_t i = 0; i < total; ++i) {
    const Timestamp ts = kDay + static_cast<Timestamp>(static_cast<double>(i) * step);
    Actor a = services[rng() % services.size()];
    a.unit = std::to_string(i / 2000);
    const int r = pick(rng, 0, 9);
    if (r < 3) {
      out.push_back(make(a, ts, "write", file("/var/log/syslog")));
    } else if (r < 6) {
      out.push_back(make(a, ts, "read", file("/etc/conf" + std::to_string(rng() % 50))));
    } else if (r < 8) {
      out.push_back(make(a, ts, "write", file("/var/spool/q" + std::to_string(rng() % 200))));
    } else if (r < 9) {
      out.push_back(make(a, ts, "read", file("/var/spool/q" + std::to_string(rng() % 200))));
    } else {
      out.push_back(make(a, ts, "recvfrom", sock("10.2.0." + std::to_string(rng() % 100) + ":443")));
    }
  }
  return out;
}

AuditGenerator::AuditGenerator(std::uint64_t seed, int processes, int files)
    : rng_(seed), files_(files) {
  static const char* names[] = {"cat", "python3", "gzip", "sshd", "curl", "make", "cc1", "ld"};
  for (int i = 0; i < processes; ++i) procs_.push_back({5000 + i, names[i % 8], {}});
}

void AuditGenerator::next(std::vector<std::string>& lines) {
  ++serial_;
  ts_ += 1 + static_cast<Timestamp>(rng_() % 400);
  auto& p = procs_[rng_() % procs_.size()];
  const std::string stamp = "msg=audit(" + std::to_string(ts_ / 1'000'000) + "." +
                            [&] {
                              std::string f = std::to_string(ts_ % 1'000'000);
                              return std::string(6 - f.size(), '0') + f;
                            }() +
                            ":" + std::to_string(serial_) + "):";
  const std::string tail = " ppid=1 pid=" + std::to_string(p.pid) +
                           " auid=1000 uid=1000 gid=1000 euid=1000 suid=1000 fsuid=1000 "
                           "egid=1000 sgid=1000 fsgid=1000 tty=pts0 ses=2 comm=\"" +
                           p.comm + "\" exe=\"/usr/bin/" + p.comm + "\" key=(null)";
  const int roll = static_cast<int>(rng_() % 100);
  if (p.fds.empty() || roll < 8) {
    const int fd = 3 + static_cast<int>(p.fds.size() % 60);
    if (p.fds.size() >= 16) p.fds.erase(p.fds.begin());
    p.fds.push_back(fd);
    const int f = static_cast<int>(rng_() % files_);
    lines.push_back("type=SYSCALL " + stamp +
                    " arch=c000003e syscall=2 success=yes exit=" + std::to_string(fd) +
                    " a0=7ffd1 a1=0 a2=1b6 a3=0 items=1" + tail);
    lines.push_back("type=CWD " + stamp + " cwd=\"/home/user1\"");
    lines.push_back("type=PATH " + stamp + " item=0 name=\"/data/set" + std::to_string(f % 64) +
                    "/file" + std::to_string(f) + "\" inode=" + std::to_string(100000 + f) +
                    " dev=08:01 mode=0100644 ouid=0 ogid=0 rdev=00:00 nametype=NORMAL");
  } else {
    const int fd = p.fds[rng_() % p.fds.size()];
    const bool write = roll % 2 == 0;
    char hex[16];
    std::snprintf(hex, sizeof hex, "%x", fd);
    lines.push_back("type=SYSCALL " + stamp + " arch=c000003e syscall=" + (write ? "1" : "0") +
                    " success=yes exit=4096 a0=" + hex + " a1=55d0 a2=1000 a3=0 items=0" + tail);
  }
  lines.push_back("type=EOE " + stamp);
}

}  // namespace synth
