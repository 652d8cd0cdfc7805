#pragma once

#include "w4s/error.hpp"
#include "w4s/util.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

namespace w4s {

using Clock = std::chrono::steady_clock;

// Owns a mkdtemp directory and removes it on destruction.
class ScratchDir {
public:
    explicit ScratchDir(std::string_view prefix = "w4s") {
        std::string tmpl = (std::filesystem::temp_directory_path() / (std::string(prefix) + "-XXXXXX")).string();
        if (::mkdtemp(tmpl.data()) == nullptr)
            throw Error(ErrorKind::IoFailure, "mkdtemp failed: " + std::string(std::strerror(errno)));
        path_ = tmpl;
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

struct ProcessLimits {
    std::uint64_t address_space_bytes = 2ULL << 30;
    std::uint64_t file_size_bytes = 64ULL << 20;
    std::uint64_t open_files = 256;
    std::uint64_t cpu_seconds = 0;  // 0 = unlimited; wall-clock budgets are enforced by the host
};

struct SpawnOptions {
    std::vector<std::string> argv;
    std::filesystem::path cwd;
    std::vector<std::string> env;  // empty = minimal PATH/LANG/HOME
    ProcessLimits limits;
    bool isolate_network = true;   // best effort: a private network namespace when permitted
};

enum class ReadStatus { line, eof, timeout, too_long };

// A child process in its own process group, wired to three pipes. Killing
// signals the whole group, so helpers the child forked die with it. The
// destructor kills and reaps.
class Subprocess {
public:
    static Subprocess spawn(const SpawnOptions& opts) {
        if (opts.argv.empty()) throw Error(ErrorKind::InvalidValue, "empty argv");
        static const bool sigpipe_ignored = [] {
            // Writes to a dead child's stdin must surface as EPIPE, not kill the host.
            ::signal(SIGPIPE, SIG_IGN);
            return true;
        }();
        (void)sigpipe_ignored;

        std::vector<std::string> env = opts.env;
        if (env.empty()) {
            const char* path = std::getenv("PATH");
            env = {std::string("PATH=") + (path ? path : "/usr/bin:/bin"), "LANG=C.UTF-8",
                   "HOME=" + opts.cwd.string(), "PYTHONDONTWRITEBYTECODE=1", "PYTHONHASHSEED=0"};
        }
        std::vector<char*> argv, envp;
        for (const auto& a : opts.argv) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        for (const auto& e : env) envp.push_back(const_cast<char*>(e.c_str()));
        envp.push_back(nullptr);
        const std::string cwd = opts.cwd.string();

        int in[2], out[2], err[2], status_pipe[2];
        if (::pipe2(in, O_CLOEXEC) || ::pipe2(out, O_CLOEXEC) || ::pipe2(err, O_CLOEXEC) ||
            ::pipe2(status_pipe, O_CLOEXEC))
            throw Error(ErrorKind::IoFailure, "pipe2 failed: " + std::string(std::strerror(errno)));

        const pid_t pid = ::fork();
        if (pid < 0) throw Error(ErrorKind::IoFailure, "fork failed: " + std::string(std::strerror(errno)));
        if (pid == 0) {
            // Child: async-signal-safe calls only until exec.
            ::setpgid(0, 0);
            ::prctl(PR_SET_PDEATHSIG, SIGKILL);
            ::dup2(in[0], 0);
            ::dup2(out[1], 1);
            ::dup2(err[1], 2);
            if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) child_fail(status_pipe[1]);
            auto limit = [](int res, std::uint64_t v) {
                if (v == 0) return;
                rlimit rl{static_cast<rlim_t>(v), static_cast<rlim_t>(v)};
                ::setrlimit(res, &rl);
            };
            limit(RLIMIT_AS, opts.limits.address_space_bytes);
            limit(RLIMIT_FSIZE, opts.limits.file_size_bytes);
            limit(RLIMIT_NOFILE, opts.limits.open_files);
            limit(RLIMIT_CPU, opts.limits.cpu_seconds);
            rlimit core{0, 0};
            ::setrlimit(RLIMIT_CORE, &core);
            if (opts.isolate_network) (void)::unshare(CLONE_NEWNET);
            ::execvpe(argv[0], argv.data(), envp.data());
            child_fail(status_pipe[1]);
        }
        ::setpgid(pid, pid);
        ::close(in[0]);
        ::close(out[1]);
        ::close(err[1]);
        ::close(status_pipe[1]);
        int child_errno = 0;
        const ssize_t got = ::read(status_pipe[0], &child_errno, sizeof child_errno);
        ::close(status_pipe[0]);
        Subprocess p;
        p.pid_ = pid;
        p.stdin_ = in[1];
        ::fcntl(in[1], F_SETFL, ::fcntl(in[1], F_GETFL) | O_NONBLOCK);
        p.stdout_ = out[0];
        p.stderr_ = err[0];
        if (got == static_cast<ssize_t>(sizeof child_errno)) {
            p.kill();
            throw Error(ErrorKind::IoFailure,
                        "cannot start " + opts.argv[0] + ": " + std::string(std::strerror(child_errno)));
        }
        return p;
    }

    Subprocess(Subprocess&& o) noexcept { *this = std::move(o); }
    Subprocess& operator=(Subprocess&& o) noexcept {
        if (this != &o) {
            cleanup();
            pid_ = std::exchange(o.pid_, -1);
            stdin_ = std::exchange(o.stdin_, -1);
            stdout_ = std::exchange(o.stdout_, -1);
            stderr_ = std::exchange(o.stderr_, -1);
            out_buf_ = std::move(o.out_buf_);
            err_tail_ = std::move(o.err_tail_);
            stdout_eof_ = o.stdout_eof_;
            exit_status_ = o.exit_status_;
        }
        return *this;
    }
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;
    ~Subprocess() { cleanup(); }

    pid_t pid() const { return pid_; }

    // Writes everything, draining the child's output meanwhile so neither
    // side can block on a full pipe. False on timeout or a closed pipe.
    bool write_all(std::string_view data, Clock::time_point deadline) {
        std::size_t off = 0;
        while (off < data.size()) {
            if (stdin_ < 0) return false;
            pollfd fds[3] = {{stdin_, POLLOUT, 0}, {stdout_, POLLIN, 0}, {stderr_, POLLIN, 0}};
            const int rc = ::poll(fds, 3, remaining_ms(deadline));
            if (rc < 0 && errno == EINTR) continue;
            if (rc <= 0) return false;
            if (fds[1].revents) pump_stdout();
            if (fds[2].revents) pump_stderr();
            if (fds[0].revents & (POLLERR | POLLHUP)) return false;
            if (fds[0].revents & POLLOUT) {
                const ssize_t n = ::write(stdin_, data.data() + off, data.size() - off);
                if (n < 0) {
                    if (errno == EINTR || errno == EAGAIN) continue;
                    return false;
                }
                off += static_cast<std::size_t>(n);
            }
        }
        return true;
    }

    void close_stdin() {
        if (stdin_ >= 0) ::close(stdin_), stdin_ = -1;
    }

    ReadStatus read_line(std::string& line, Clock::time_point deadline, std::size_t max_bytes) {
        for (;;) {
            if (const auto nl = out_buf_.find('\n'); nl != std::string::npos) {
                if (nl > max_bytes) return ReadStatus::too_long;
                line = out_buf_.substr(0, nl);
                out_buf_.erase(0, nl + 1);
                return ReadStatus::line;
            }
            if (out_buf_.size() > max_bytes) return ReadStatus::too_long;
            if (stdout_eof_) {
                if (!out_buf_.empty()) {
                    line = std::move(out_buf_);
                    out_buf_.clear();
                    return ReadStatus::line;
                }
                return ReadStatus::eof;
            }
            if (!wait_readable(deadline)) return ReadStatus::timeout;
        }
    }

    // Collects stdout until EOF or the deadline. nullopt on timeout.
    std::optional<std::string> read_all(Clock::time_point deadline, std::size_t max_bytes) {
        while (!stdout_eof_) {
            if (out_buf_.size() > max_bytes) break;
            if (!wait_readable(deadline)) return std::nullopt;
        }
        return std::exchange(out_buf_, {});
    }

    // Waits for exit until the deadline; on timeout kills the group.
    // Returns the raw wait status, or nullopt if it had to be killed.
    std::optional<int> wait(Clock::time_point deadline) {
        if (pid_ < 0) return exit_status_;
        for (;;) {
            siginfo_t info{};
            if (::waitid(P_PID, static_cast<id_t>(pid_), &info, WEXITED | WNOHANG | WNOWAIT) == 0 &&
                info.si_pid == pid_) {
                // Still a zombie, so the group id cannot have been reused yet.
                kill_group();
                int status = 0;
                while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
                }
                exit_status_ = status;
                pid_ = -1;
                return status;
            }
            if (Clock::now() >= deadline) {
                kill();
                return std::nullopt;
            }
            if (stderr_ >= 0) {
                pollfd fd{stderr_, POLLIN, 0};
                if (::poll(&fd, 1, 5) > 0) pump_stderr();
            } else {
                ::usleep(2000);
            }
        }
    }

    void kill() {
        if (pid_ < 0) return;
        kill_group();
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
        exit_status_ = status;
        pid_ = -1;
    }

    const std::string& stderr_tail() const { return err_tail_; }
    std::optional<int> exit_status() const { return exit_status_; }

private:
    Subprocess() = default;

    [[noreturn]] static void child_fail(int fd) {
        const int e = errno;
        (void)!::write(fd, &e, sizeof e);
        ::_exit(127);
    }

    static int remaining_ms(Clock::time_point deadline) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
    }

    // Blocks until stdout has data (or EOF). False on deadline.
    bool wait_readable(Clock::time_point deadline) {
        for (;;) {
            if (stdout_eof_) return true;
            pollfd fds[2] = {{stdout_, POLLIN, 0}, {stderr_, POLLIN, 0}};
            const int rc = ::poll(fds, 2, remaining_ms(deadline));
            if (rc < 0 && errno == EINTR) continue;
            if (rc == 0) return false;
            if (rc < 0) return false;
            if (fds[1].revents) pump_stderr();
            if (fds[0].revents) {
                pump_stdout();
                return true;
            }
            if (Clock::now() >= deadline) return false;
        }
    }

    void pump_stdout() {
        if (stdout_ < 0) return;
        char buf[65536];
        const ssize_t n = ::read(stdout_, buf, sizeof buf);
        if (n > 0) {
            out_buf_.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
            stdout_eof_ = true;
            ::close(stdout_);
            stdout_ = -1;
        }
    }

    void pump_stderr() {
        if (stderr_ < 0) return;
        char buf[8192];
        const ssize_t n = ::read(stderr_, buf, sizeof buf);
        if (n > 0) {
            err_tail_.append(buf, static_cast<std::size_t>(n));
            constexpr std::size_t keep = 16384;
            if (err_tail_.size() > keep) err_tail_.erase(0, err_tail_.size() - keep);
        } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
            ::close(stderr_);
            stderr_ = -1;
        }
    }

    void kill_group() {
        if (pid_ > 0) {
            ::kill(-pid_, SIGKILL);
            ::kill(pid_, SIGKILL);
        }
    }

    void cleanup() {
        kill();
        for (int* fd : {&stdin_, &stdout_, &stderr_}) {
            if (*fd >= 0) ::close(*fd), *fd = -1;
        }
    }

    pid_t pid_ = -1;
    int stdin_ = -1;
    int stdout_ = -1;
    int stderr_ = -1;
    std::string out_buf_;
    std::string err_tail_;
    bool stdout_eof_ = false;
    std::optional<int> exit_status_;
};

}  // namespace w4s
