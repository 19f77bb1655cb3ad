#include "truncdse/solver.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>

namespace truncdse::solver {

const char* status_name(Status s) {
  switch (s) {
  case Status::Sat: return "sat";
  case Status::Unsat: return "unsat";
  case Status::Unknown: return "unknown";
  }
  return "?";
}

unsigned total_width(const SolverJob& job) {
  unsigned w = 0;
  for (const auto& s : job.layout)
    w += s.width;
  return w;
}

namespace {

/// The constraint DAG flattened into a post-order array so an assignment is
/// checked with one linear pass and no allocation.
class Linearized {
public:
  Linearized(const std::vector<bv::Expr>& constraints, const std::vector<InputSlot>& layout) {
    for (std::size_t i = 0; i < layout.size(); ++i)
      slot_of_var_[layout[i].var_id] = i;
    for (const auto& c : constraints)
      roots_.push_back(visit(c));
    values_.resize(steps_.size());
  }

  /// True when every constraint holds for the given slot values.
  bool holds(const std::vector<std::uint64_t>& slots) {
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      const Step& s = steps_[i];
      if (s.slot >= 0) {
        values_[i] = slots[static_cast<std::size_t>(s.slot)] & bv::mask(s.node->width);
        continue;
      }
      std::uint64_t kids[3];
      for (std::size_t k = 0; k < s.nkids; ++k)
        kids[k] = values_[s.kids[k]];
      values_[i] = bv::apply(*s.node, std::span<const std::uint64_t>(kids, s.nkids));
    }
    for (auto r : roots_)
      if (values_[r] != 1)
        return false;
    return true;
  }

private:
  struct Step {
    const bv::Node* node;
    int slot = -1;
    std::size_t nkids = 0;
    std::size_t kids[3] = {0, 0, 0};
  };

  std::size_t visit(const bv::Expr& e) {
    if (auto it = index_.find(e.get()); it != index_.end())
      return it->second;
    Step s{e.get()};
    if (e.kind() == bv::Kind::Var) {
      auto it = slot_of_var_.find(e->var_id);
      if (it == slot_of_var_.end())
        throw SolverError("solve: variable '" + e->name + "' missing from input layout");
      s.slot = static_cast<int>(it->second);
    } else {
      s.nkids = e->kids.size();
      for (std::size_t k = 0; k < s.nkids; ++k)
        s.kids[k] = visit(e->kids[k]);
    }
    steps_.push_back(s);
    index_.emplace(e.get(), steps_.size() - 1);
    return steps_.size() - 1;
  }

  std::unordered_map<std::uint32_t, std::size_t> slot_of_var_;
  std::unordered_map<const bv::Node*, std::size_t> index_;
  std::vector<Step> steps_;
  std::vector<std::size_t> roots_;
  std::vector<std::uint64_t> values_;
};

bv::Assignment to_assignment(const std::vector<InputSlot>& layout,
                             const std::vector<std::uint64_t>& slots) {
  bv::Assignment a;
  for (std::size_t i = 0; i < layout.size(); ++i)
    a.set(layout[i].var_id, slots[i]);
  return a;
}

/// Seed value first, then ascending boundary values for a slot.
std::vector<std::uint64_t> candidates(const InputSlot& slot,
                                      const std::vector<std::pair<std::uint64_t, unsigned>>& consts) {
  const unsigned w = slot.width;
  const std::uint64_t m = bv::mask(w);
  std::set<std::uint64_t> vals = {0, 1, 2, m, m - 1};
  for (unsigned k = 1; k < w; ++k) {
    std::uint64_t p = std::uint64_t{1} << k;
    for (std::uint64_t v : {p, p - 1, p + 1, (~p + 1) & m, (~p + 2) & m})
      vals.insert(v & m);
  }
  for (auto [c, cw] : consts) {
    std::uint64_t v = c & m;
    for (std::uint64_t d : {v, (v + 1) & m, (v - 1) & m, (~v + 1) & m})
      vals.insert(d);
    if (cw < w) {
      // the same constant, sign-extended to the slot width
      std::uint64_t sx = static_cast<std::uint64_t>(bv::to_signed(c, cw)) & m;
      vals.insert(sx);
      vals.insert((sx + 1) & m);
      vals.insert((sx - 1) & m);
    }
  }
  std::vector<std::uint64_t> out;
  out.push_back(slot.seed_value & m);
  for (auto v : vals)
    if (v != out.front())
      out.push_back(v);
  return out;
}

void write_smtlib(const SolverJob& job, const SolverOptions& opts, SolverVerdict& v) {
  v.status = Status::Unknown;
  v.reason = UnknownReason::BudgetExceeded;
  if (opts.smtlib_dir.empty())
    return;
  std::filesystem::create_directories(opts.smtlib_dir);
  auto path = opts.smtlib_dir / (std::to_string(job.id) + ".smt2");
  std::ofstream out(path);
  out << bv::to_smtlib(job.constraints);
  if (!out)
    throw SolverError("solve: cannot write " + path.string());
  v.reason = UnknownReason::EmittedSmtlib;
  v.smtlib_path = path;
}

}  // namespace

SolverVerdict solve(const SolverJob& job, const SolverOptions& opts) {
  if (opts.budget == 0)
    throw SolverError("solve: budget must be at least 1");
  for (const auto& c : job.constraints)
    if (!c || c.width() != 1)
      throw SolverError("solve: constraint of width != 1");

  Linearized lin(job.constraints, job.layout);
  const unsigned width = total_width(job);
  const std::size_t n = job.layout.size();
  std::vector<std::uint64_t> slots(n, 0);
  SolverVerdict verdict;

  auto found = [&]() {
    verdict.status = Status::Sat;
    verdict.model = to_assignment(job.layout, slots);
    for (const auto& c : job.constraints)
      if (bv::eval(c, verdict.model) != 1)
        throw SolverError("solve: model failed re-check for job " + std::to_string(job.id));
    return verdict;
  };

  if (width < 64 && (std::uint64_t{1} << width) <= opts.budget) {
    const std::uint64_t space = std::uint64_t{1} << width;
    for (std::uint64_t code = 0; code < space; ++code) {
      // decode: the last slot holds the least significant bits
      std::uint64_t rest = code;
      for (std::size_t i = n; i-- > 0;) {
        slots[i] = rest & bv::mask(job.layout[i].width);
        rest = job.layout[i].width >= 64 ? 0 : rest >> job.layout[i].width;
      }
      ++verdict.evaluations;
      if (lin.holds(slots))
        return found();
    }
    verdict.status = Status::Unsat;
    return verdict;
  }

  auto consts = bv::collect_constants(job.constraints);
  std::vector<std::vector<std::uint64_t>> cands;
  for (const auto& s : job.layout)
    cands.push_back(candidates(s, consts));
  std::vector<std::size_t> pos(n, 0);
  auto advance = [&]() {
    for (std::size_t i = n; i-- > 0;) {
      if (++pos[i] < cands[i].size())
        return true;
      pos[i] = 0;
    }
    return false;
  };
  do {
    for (std::size_t i = 0; i < n; ++i)
      slots[i] = cands[i][pos[i]];
    ++verdict.evaluations;
    if (lin.holds(slots))
      return found();
  } while (verdict.evaluations < opts.budget && advance());
  write_smtlib(job, opts, verdict);
  return verdict;
}

std::vector<std::uint8_t> model_to_input_bytes(const bv::Assignment& model,
                                               const std::vector<InputSlot>& layout,
                                               std::vector<std::uint8_t> seed) {
  for (const auto& s : layout) {
    auto v = model.get(s.var_id);
    if (!v)
      throw SolverError("model_to_input_bytes: no value for variable id " +
                        std::to_string(s.var_id));
    const std::size_t nbytes = s.width / 8;
    if (seed.size() < s.byte_offset + nbytes)
      seed.resize(s.byte_offset + nbytes, 0);
    for (std::size_t b = 0; b < nbytes; ++b)
      seed[s.byte_offset + b] = static_cast<std::uint8_t>((*v >> (8 * b)) & 0xFF);
  }
  return seed;
}

std::uint64_t JobQueue::push(SolverJob job) {
  std::lock_guard lock(mu_);
  job.id = jobs_.size();
  jobs_.push_back(std::move(job));
  return jobs_.back().id;
}

std::size_t JobQueue::size() const {
  std::lock_guard lock(mu_);
  return jobs_.size();
}

void JobQueue::drain(unsigned workers) {
  std::exception_ptr failure;
  auto work = [this, &failure]() {
    for (;;) {
      const SolverJob* job = nullptr;
      {
        std::lock_guard lock(mu_);
        if (next_ >= jobs_.size() || failure)
          return;
        job = &jobs_[next_++];
      }
      try {
        SolverVerdict v = solve(*job, opts_);
        std::lock_guard lock(mu_);
        results_[job->id] = std::move(v);
      } catch (...) {
        std::lock_guard lock(mu_);
        failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < workers; ++i)
      pool.emplace_back(work);
  }
  if (failure)
    std::rethrow_exception(failure);
}

}  // namespace truncdse::solver
