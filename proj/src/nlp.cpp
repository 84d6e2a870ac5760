#include "feedertk/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Sparse>

namespace feedertk::nlp {

const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::IterationLimit: return "iteration_limit";
        case SolveStatus::LineSearchFailure: return "line_search_failure";
        case SolveStatus::LinearSolverFailure: return "linear_solver_failure";
    }
    return "?";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

constexpr double kTauMin = 0.99;
constexpr double kKappaEps = 10.0;    // barrier subproblem tolerance factor
constexpr double kKappaMu = 0.2;      // linear mu decrease
constexpr double kThetaMu = 1.5;      // superlinear mu decrease
constexpr double kKappaSigma = 1e10;  // bound-multiplier corridor
constexpr double kBoundRelax = 1e-8;
constexpr double kBoundPush = 1e-2;

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

SolveResult solve(Problem& prob, const SolveOptions& opts, const WarmStart* warm) {
    const int n = prob.num_vars();
    const int m = prob.num_cons();

    Eigen::VectorXd xl(n), xu(n), cl(m), cu(m);
    prob.bounds(xl, xu, cl, cu);

    // Equality rows keep cl == cu; every other row gets a slack variable
    // bounded by [cl, cu].
    std::vector<int> slack_of(m, -1);
    std::vector<int> row_of_slack;
    for (int i = 0; i < m; ++i) {
        if (cl[i] == cu[i]) continue;
        slack_of[i] = static_cast<int>(row_of_slack.size());
        row_of_slack.push_back(i);
    }
    const int mi = static_cast<int>(row_of_slack.size());
    const int N = n + mi;

    Eigen::VectorXd yl(N), yu(N);
    yl.head(n) = xl;
    yu.head(n) = xu;
    for (int k = 0; k < mi; ++k) {
        yl[n + k] = cl[row_of_slack[k]];
        yu[n + k] = cu[row_of_slack[k]];
    }
    // Relax finite bounds slightly so active bounds keep a usable interior.
    for (int j = 0; j < N; ++j) {
        if (std::isfinite(yl[j])) yl[j] -= kBoundRelax * std::max(1.0, std::abs(yl[j]));
        if (std::isfinite(yu[j])) yu[j] += kBoundRelax * std::max(1.0, std::abs(yu[j]));
    }

    auto push_interior = [&](Eigen::VectorXd& y) {
        for (int j = 0; j < N; ++j) {
            bool lo = std::isfinite(yl[j]), hi = std::isfinite(yu[j]);
            if (lo && hi) {
                double p = std::min(kBoundPush * std::max(1.0, std::abs(yl[j])),
                                    kBoundPush * (yu[j] - yl[j]));
                double q = std::min(kBoundPush * std::max(1.0, std::abs(yu[j])),
                                    kBoundPush * (yu[j] - yl[j]));
                y[j] = std::min(std::max(y[j], yl[j] + p), yu[j] - q);
            } else if (lo) {
                y[j] = std::max(y[j], yl[j] + kBoundPush * std::max(1.0, std::abs(yl[j])));
            } else if (hi) {
                y[j] = std::min(y[j], yu[j] - kBoundPush * std::max(1.0, std::abs(yu[j])));
            }
        }
    };

    // Sparsity patterns are fixed across iterations.
    std::vector<int> jr, jc, hr, hc;
    prob.jacobian_structure(jr, jc);
    prob.hessian_structure(hr, hc);
    const int nnz_j = static_cast<int>(jr.size());
    const int nnz_h = static_cast<int>(hr.size());
    Eigen::VectorXd jv(nnz_j), hv(nnz_h);

    Eigen::VectorXd y(N);
    {
        Eigen::VectorXd x0(n);
        if (warm && warm->x.size() == n)
            x0 = warm->x;
        else
            prob.initial_point(x0);
        y.head(n) = x0;
        Eigen::VectorXd c0(m);
        prob.constraints(x0, c0);
        for (int k = 0; k < mi; ++k) y[n + k] = c0[row_of_slack[k]];
        push_interior(y);
    }

    double mu = opts.mu_init;
    const double mu_min = opts.tol / 11.0;

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    if (warm && warm->lambda.size() == m) lambda = warm->lambda;
    Eigen::VectorXd zl = Eigen::VectorXd::Zero(N), zu = Eigen::VectorXd::Zero(N);
    for (int j = 0; j < N; ++j) {
        if (std::isfinite(yl[j])) zl[j] = std::clamp(mu / (y[j] - yl[j]), 1e-8, 1e6);
        if (std::isfinite(yu[j])) zu[j] = std::clamp(mu / (yu[j] - y[j]), 1e-8, 1e6);
    }
    if (warm && warm->zl.size() == n && warm->zu.size() == n) {
        for (int j = 0; j < n; ++j) {
            if (std::isfinite(yl[j])) zl[j] = std::max(warm->zl[j], 1e-8);
            if (std::isfinite(yu[j])) zu[j] = std::max(warm->zu[j], 1e-8);
        }
    }

    Eigen::VectorXd gx(n), cvals(m);
    Eigen::VectorXd gy = Eigen::VectorXd::Zero(N);
    Eigen::VectorXd r(m);  // c(x) - cl (equality rows) or c(x) - s

    auto eval_point = [&](const Eigen::VectorXd& yv, double& f) {
        Eigen::VectorXd x = yv.head(n);
        f = prob.objective(x);
        prob.constraints(x, cvals);
        for (int i = 0; i < m; ++i)
            r[i] = cvals[i] - (slack_of[i] < 0 ? cl[i] : yv[n + slack_of[i]]);
    };

    auto barrier_value = [&](const Eigen::VectorXd& yv, double f) {
        double phi = f;
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j])) phi -= mu * std::log(yv[j] - yl[j]);
            if (std::isfinite(yu[j])) phi -= mu * std::log(yu[j] - yv[j]);
        }
        return phi;
    };

    // KKT system [H + Sigma + dw*I, A^T; A, -dc*I]; the pattern is constant,
    // so the symbolic factorization is computed once.
    SpMat K(N + m, N + m);
    Eigen::SparseLU<SpMat> lu;
    bool analyzed = false;

    auto assemble = [&](const Eigen::VectorXd& sigma, double dw, double dc) {
        std::vector<Trip> t;
        t.reserve(2 * nnz_h + 2 * (nnz_j + mi) + N + m);
        for (int j = 0; j < N; ++j) t.emplace_back(j, j, sigma[j] + dw);
        for (int k = 0; k < nnz_h; ++k) {
            t.emplace_back(hr[k], hc[k], hv[k]);
            if (hr[k] != hc[k]) t.emplace_back(hc[k], hr[k], hv[k]);
        }
        for (int k = 0; k < nnz_j; ++k) {
            t.emplace_back(N + jr[k], jc[k], jv[k]);
            t.emplace_back(jc[k], N + jr[k], jv[k]);
        }
        for (int k = 0; k < mi; ++k) {
            t.emplace_back(N + row_of_slack[k], n + k, -1.0);
            t.emplace_back(n + k, N + row_of_slack[k], -1.0);
        }
        for (int i = 0; i < m; ++i) t.emplace_back(N + i, N + i, -dc);
        K.setFromTriplets(t.begin(), t.end());
        if (!analyzed) {
            lu.analyzePattern(K);
            analyzed = true;
        }
        lu.factorize(K);
        return lu.info() == Eigen::Success;
    };

    double f = 0.0;
    eval_point(y, f);

    // Raw KKT error at an arbitrary point, used by the progress-based step
    // acceptance. Leaves the caller's cached evaluations untouched.
    auto kkt_error_at = [&](const Eigen::VectorXd& yv, const Eigen::VectorXd& lam,
                            const Eigen::VectorXd& zlv, const Eigen::VectorXd& zuv, double muv) {
        Eigen::VectorXd xv = yv.head(n), gv(n), cv(m), jvv(nnz_j);
        prob.gradient(xv, gv);
        prob.constraints(xv, cv);
        prob.jacobian_values(xv, jvv);
        Eigen::VectorXd rdv = -zlv + zuv;
        rdv.head(n) += gv;
        for (int k = 0; k < nnz_j; ++k) rdv[jc[k]] += jvv[k] * lam[jr[k]];
        for (int k = 0; k < mi; ++k) rdv[n + k] -= lam[row_of_slack[k]];
        double feas_v = 0.0;
        for (int i = 0; i < m; ++i)
            feas_v = std::max(feas_v,
                              std::abs(cv[i] - (slack_of[i] < 0 ? cl[i] : yv[n + slack_of[i]])));
        double comp = 0.0, z_sum = 0.0;
        int n_sides = 0;
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j])) {
                comp = std::max(comp, std::abs((yv[j] - yl[j]) * zlv[j] - muv));
                z_sum += zlv[j];
                ++n_sides;
            }
            if (std::isfinite(yu[j])) {
                comp = std::max(comp, std::abs((yu[j] - yv[j]) * zuv[j] - muv));
                z_sum += zuv[j];
                ++n_sides;
            }
        }
        double sdv = std::max(100.0, (lam.cwiseAbs().sum() + z_sum) / std::max(1, m + n_sides)) /
                     100.0;
        double scv = std::max(100.0, z_sum / std::max(1, n_sides)) / 100.0;
        return std::max({inf_norm(rdv) / sdv, feas_v, comp / scv});
    };

    SolveResult res;
    double nu = 1.0;       // l1 penalty weight
    double dw_last = 0.0;  // seed for the next regularization attempt
    int iter = 0;

    auto finish = [&](SolveStatus st, const std::string& msg) {
        res.x = y.head(n);
        res.lambda = lambda;
        res.zl = zl.head(n);
        res.zu = zu.head(n);
        res.objective = f;
        res.iterations = iter;
        res.status = st;
        res.message = msg;
        double viol = 0.0;
        for (int i = 0; i < m; ++i)
            viol = std::max(viol, std::max(cl[i] - cvals[i], cvals[i] - cu[i]));
        res.con_violation = std::max(viol, 0.0);
        return res;
    };

    for (;; ++iter) {
        Eigen::VectorXd x = y.head(n);
        prob.gradient(x, gx);
        gy.head(n) = gx;
        gy.tail(mi).setZero();
        prob.jacobian_values(x, jv);

        // Dual residual gy + A^T lambda - zl + zu.
        Eigen::VectorXd rd = gy - zl + zu;
        for (int k = 0; k < nnz_j; ++k) rd[jc[k]] += jv[k] * lambda[jr[k]];
        for (int k = 0; k < mi; ++k) rd[n + k] -= lambda[row_of_slack[k]];

        double comp0 = 0.0, comp_mu = 0.0, z_sum = 0.0;
        int n_sides = 0;
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j])) {
                double t = (y[j] - yl[j]) * zl[j];
                comp0 = std::max(comp0, t);
                comp_mu = std::max(comp_mu, std::abs(t - mu));
                z_sum += zl[j];
                ++n_sides;
            }
            if (std::isfinite(yu[j])) {
                double t = (yu[j] - y[j]) * zu[j];
                comp0 = std::max(comp0, t);
                comp_mu = std::max(comp_mu, std::abs(t - mu));
                z_sum += zu[j];
                ++n_sides;
            }
        }
        double lam_sum = lambda.cwiseAbs().sum();
        double sd = std::max(100.0, (lam_sum + z_sum) / std::max(1, m + n_sides)) / 100.0;
        double sc = std::max(100.0, z_sum / std::max(1, n_sides)) / 100.0;
        double feas = inf_norm(r);
        double e0 = std::max({inf_norm(rd) / sd, feas, comp0 / sc});
        res.kkt_error = e0;

        if (opts.verbose)
            std::fprintf(stderr, "it %3d f %.8e feas %.2e kkt %.2e mu %.1e dual %.2e comp %.2e\n",
                         iter, f, feas, e0, mu, inf_norm(rd) / sd, comp0 / sc);

        if (e0 <= opts.tol && feas <= opts.con_tol) return finish(SolveStatus::Optimal, "");
        if (iter >= opts.max_iter)
            return finish(SolveStatus::IterationLimit, "iteration limit reached");

        // Monotone barrier update once the subproblem is solved to kappa*mu.
        while (mu > mu_min && std::max({inf_norm(rd) / sd, feas, comp_mu / sc}) <= kKappaEps * mu) {
            mu = std::max(mu_min, std::min(kKappaMu * mu, std::pow(mu, kThetaMu)));
            comp_mu = 0.0;
            for (int j = 0; j < N; ++j) {
                if (std::isfinite(yl[j]))
                    comp_mu = std::max(comp_mu, std::abs((y[j] - yl[j]) * zl[j] - mu));
                if (std::isfinite(yu[j]))
                    comp_mu = std::max(comp_mu, std::abs((yu[j] - y[j]) * zu[j] - mu));
            }
        }
        double tau = std::max(kTauMin, 1.0 - mu);

        Eigen::VectorXd sigma = Eigen::VectorXd::Zero(N);
        Eigen::VectorXd gbar = gy;  // gradient of the barrier function
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j])) {
                sigma[j] += zl[j] / (y[j] - yl[j]);
                gbar[j] -= mu / (y[j] - yl[j]);
            }
            if (std::isfinite(yu[j])) {
                sigma[j] += zu[j] / (yu[j] - y[j]);
                gbar[j] += mu / (yu[j] - y[j]);
            }
        }

        Eigen::VectorXd rhs(N + m);
        rhs.head(N) = -gbar;
        for (int k = 0; k < nnz_j; ++k) rhs[jc[k]] -= jv[k] * lambda[jr[k]];
        for (int k = 0; k < mi; ++k) rhs[n + k] += lambda[row_of_slack[k]];
        rhs.tail(m) = -r;

        prob.hessian_values(x, 1.0, lambda, hv);

        // Regularization loop: retry with growing dw until the factorization
        // succeeds and the step is a descent direction for the merit function.
        double dw = 0.0;
        Eigen::VectorXd dy, dlam;
        double dphi = 0.0, gd = 0.0, r1 = r.cwiseAbs().sum();
        bool have_step = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            if (assemble(sigma, dw, 1e-8)) {
                Eigen::VectorXd sol = lu.solve(rhs);
                if (sol.allFinite()) {
                    dy = sol.head(N);
                    dlam = sol.tail(m);
                    gd = gbar.dot(dy);
                    if (r1 > 1e-14) {
                        double nu_req = gd / (0.5 * r1);
                        nu = std::max({nu, nu_req + 1e-6,
                                       1.1 * inf_norm(lambda + dlam)});
                    }
                    dphi = gd - nu * r1;
                    if (dphi < -1e-16 || dy.lpNorm<Eigen::Infinity>() < 1e-14) {
                        have_step = true;
                        break;
                    }
                }
            }
            dw = (dw == 0.0) ? std::max(1e-4, dw_last / 3.0) : dw * 10.0;
            if (dw > 1e12)
                return finish(SolveStatus::LinearSolverFailure,
                              "KKT system remained singular or ascent under regularization");
        }
        if (!have_step)
            return finish(SolveStatus::LinearSolverFailure, "no usable search direction");
        dw_last = dw;

        // Fraction-to-boundary step caps.
        double a_pri = 1.0, a_dual = 1.0;
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j]) && dy[j] < 0)
                a_pri = std::min(a_pri, -tau * (y[j] - yl[j]) / dy[j]);
            if (std::isfinite(yu[j]) && dy[j] > 0)
                a_pri = std::min(a_pri, tau * (yu[j] - y[j]) / dy[j]);
        }
        Eigen::VectorXd dzl = Eigen::VectorXd::Zero(N), dzu = Eigen::VectorXd::Zero(N);
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j])) {
                dzl[j] = mu / (y[j] - yl[j]) - zl[j] - zl[j] / (y[j] - yl[j]) * dy[j];
                if (dzl[j] < 0) a_dual = std::min(a_dual, -tau * zl[j] / dzl[j]);
            }
            if (std::isfinite(yu[j])) {
                dzu[j] = mu / (yu[j] - y[j]) - zu[j] + zu[j] / (yu[j] - y[j]) * dy[j];
                if (dzu[j] < 0) a_dual = std::min(a_dual, -tau * zu[j] / dzu[j]);
            }
        }

        // A capped full step that strictly shrinks the raw KKT error is
        // taken outright; the merit function cannot see multiplier
        // corrections and would otherwise stall on them near a solution.
        double alpha = a_pri;
        bool accepted = false;
        {
            Eigen::VectorXd y_t = y + a_pri * dy;
            Eigen::VectorXd lam_t = lambda + a_pri * dlam;
            Eigen::VectorXd zl_t = zl + a_dual * dzl;
            Eigen::VectorXd zu_t = zu + a_dual * dzu;
            double e_now = std::max({inf_norm(rd) / sd, feas, comp_mu / sc});
            if (kkt_error_at(y_t, lam_t, zl_t, zu_t, mu) <= 0.99 * e_now) {
                y = y_t;
                lambda = lam_t;
                zl = zl_t;
                zu = zu_t;
                eval_point(y, f);
                accepted = true;
            }
        }

        if (!accepted) {
            // Armijo backtracking on the l1 merit function.
            double phi0 = barrier_value(y, f);
            Eigen::VectorXd y_trial;
            double f_trial = 0.0;
            for (int ls = 0; ls < 60; ++ls) {
                y_trial = y + alpha * dy;
                eval_point(y_trial, f_trial);
                double phi = barrier_value(y_trial, f_trial) + nu * r.cwiseAbs().sum();
                if (std::isfinite(phi) && phi <= phi0 + nu * r1 + 1e-4 * alpha * dphi) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
                if (alpha < 1e-12) break;
            }
            if (!accepted) {
                eval_point(y, f);  // restore cached residuals at the current point
                return finish(SolveStatus::LineSearchFailure, "merit line search failed");
            }
            y = y_trial;
            f = f_trial;
            lambda += alpha * dlam;
            zl += a_dual * dzl;
            zu += a_dual * dzu;
        }
        // Keep bound multipliers inside the primal-dual corridor.
        for (int j = 0; j < N; ++j) {
            if (std::isfinite(yl[j]))
                zl[j] = std::clamp(zl[j], mu / (kKappaSigma * (y[j] - yl[j])),
                                   kKappaSigma * mu / (y[j] - yl[j]));
            if (std::isfinite(yu[j]))
                zu[j] = std::clamp(zu[j], mu / (kKappaSigma * (yu[j] - y[j])),
                                   kKappaSigma * mu / (yu[j] - y[j]));
        }
    }
}

}  // namespace feedertk::nlp
