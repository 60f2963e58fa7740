"""Canonical pretty-printer; parse(pretty(parse(s))) equals parse(s)."""

from __future__ import annotations

from . import nodes as n

_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}


def expr(e: n.Expr, parent_prec: int = 0) -> str:
    if isinstance(e, n.Num):
        return str(e.value)
    if isinstance(e, n.Name):
        return e.ident
    if isinstance(e, n.Index):
        return f"{e.ident}[{expr(e.index)}]"
    if isinstance(e, n.FieldRef):
        return f"{e.ident}.{e.fieldname}"
    if isinstance(e, n.Unary):
        return f"{e.op}{expr(e.operand, 7)}"
    if isinstance(e, n.Binary):
        prec = _PREC[e.op]
        # children are printed one level tighter on the right so that the
        # reparsed tree keeps left associativity
        s = f"{expr(e.left, prec)} {e.op} {expr(e.right, prec + 1)}"
        if prec < parent_prec:
            return f"({s})"
        return s
    raise TypeError(f"not an expression: {e!r}")


def stmt(s: n.Stmt, indent: int = 0) -> str:
    pad = "    " * indent
    if isinstance(s, n.Skip):
        return pad + "skip"
    if isinstance(s, n.Break):
        return pad + "break"
    if isinstance(s, n.Else):
        return pad + "else"
    if isinstance(s, n.ExprStmt):
        return pad + expr(s.expr)
    if isinstance(s, n.Assign):
        return pad + f"{expr(s.target)} = {expr(s.expr)}"
    if isinstance(s, n.Assert):
        return pad + f"assert({expr(s.expr)})"
    if isinstance(s, n.Send):
        return pad + f"{s.chan} ! " + ", ".join(expr(e) for e in s.exprs)
    if isinstance(s, n.Receive):
        return pad + f"{s.chan} ? " + ", ".join(expr(t) for t in s.targets)
    if isinstance(s, n.Run):
        return pad + f"run {s.proc}(" + ", ".join(expr(a) for a in s.args) + ")"
    if isinstance(s, n.LocalDecl):
        return pad + _var_decl(s.decl)
    if isinstance(s, n.Atomic):
        inner = ";\n".join(stmt(x, indent + 1) for x in s.body)
        return f"{pad}atomic {{\n{inner}\n{pad}}}"
    if isinstance(s, n.GuardedExpr):
        head = expr(s.guard)
        if not s.body:
            return pad + head
        body = ";\n".join(stmt(x, indent + 1) for x in s.body)
        return f"{pad}{head} ->\n{body}"
    if isinstance(s, (n.IfFi, n.DoOd)):
        kw, closer = ("if", "fi") if isinstance(s, n.IfFi) else ("do", "od")
        parts = [pad + kw]
        for opt in s.options:
            parts.append(pad + "::")
            if opt and isinstance(opt[0], n.Else):
                rest = ";\n".join(stmt(x, indent + 1) for x in opt[1:])
                parts[-1] = pad + ":: else" + (" ->\n" + rest if opt[1:] else "")
            elif len(opt) == 1 and isinstance(opt[0], n.GuardedExpr):
                g = opt[0]
                head = expr(g.guard)
                if g.body:
                    body = ";\n".join(stmt(x, indent + 1) for x in g.body)
                    parts[-1] = f"{pad}:: {head} ->\n{body}"
                else:
                    parts[-1] = f"{pad}:: {head} ->"
            else:
                body = ";\n".join(stmt(x, indent + 1) for x in opt)
                parts[-1] = f"{pad}::\n{body}"
        parts.append(pad + closer)
        return "\n".join(parts)
    raise TypeError(f"not a statement: {s!r}")


def label(s: n.Stmt) -> str:
    """One-line rendering used for transition labels and traces."""
    if isinstance(s, (n.IfFi, n.DoOd)):
        kw = "if" if isinstance(s, n.IfFi) else "do"
        return f"{kw} ({len(s.options)} options)"
    if isinstance(s, n.Atomic):
        return "atomic { ... }"
    if isinstance(s, n.GuardedExpr):
        return expr(s.guard)
    text = stmt(s, 0)
    return " ".join(text.split())


def _var_decl(v: n.VarDecl) -> str:
    out = f"{v.kind} {v.name}"
    if v.array_len is not None:
        out += f"[{v.array_len}]"
    if v.init is not None:
        out += f" = {expr(v.init)}"
    return out


def model(m: n.Model) -> str:
    parts: list[str] = []
    if m.mtype_decls:
        parts.append("mtype = { " + ", ".join(m.mtype_decls) + " }")
    for t in m.type_decls:
        fields = ";\n".join("    " + _var_decl(f) for f in t.fields)
        parts.append(f"typedef {t.name} {{\n{fields}\n}}")
    for c in m.chan_decls:
        kinds = ", ".join(c.field_kinds)
        parts.append(f"chan {c.name} = [{c.capacity}] of {{ {kinds} }}")
    for v in m.var_decls:
        parts.append(_var_decl(v))
    for p in m.proctypes:
        params = "; ".join(f"{q.kind} {q.name}" for q in p.params)
        head = ("active " if p.active else "") + f"proctype {p.name}({params})"
        body = ";\n".join(stmt(s, 1) for s in p.body)
        parts.append(f"{head} {{\n{body}\n}}")
    if m.init_block:
        runs = ";\n".join(stmt(r, 1) for r in m.init_block)
        parts.append(f"init {{\n{runs}\n}}")
    return ";\n".join(parts) + "\n"
