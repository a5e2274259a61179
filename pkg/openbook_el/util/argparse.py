"""
Command argument parser used by the obel command line.

Arguments are declared as dictionaries (name, msg, type, default, required,
pos, aliases, choices). Values are accepted as ``--key value``,
``--key=value``, ``key=value``, positionally in declaration order, and
``+flag`` / ``-flag`` for booleans. List arguments accumulate repeated
occurrences.
"""
import ast
from typing import Dict, List, Any, Optional


class ArgumentError(ValueError):
    """Raised when the command line cannot be parsed"""

    def __init__(self, message: str, cmd_name: Optional[str] = None):
        super().__init__(message)
        self.cmd_name = cmd_name


class ArgParse:
    def __init__(self):
        self.commands = {}
        self.command_args = {}
        self.kwargs = {}
        self.current_command = None
        self.help_requested = False
        self.explicit = set()
        self._last_cmd = None

    def add_cmd(self, name: str, msg: str = ""):
        """Add a command"""
        self.commands[name] = {'name': name, 'msg': msg}
        self._last_cmd = name

    def add_args(self, args_list: List[Dict[str, Any]]):
        """Add arguments to the most recently added command"""
        if self._last_cmd is None:
            raise ValueError("No command to add arguments to")
        self.command_args[self._last_cmd] = list(args_list)

    def _cast_value(self, value: Any, value_type: type) -> Any:
        """
        Cast a value to the specified type.

        Supported types: str, int, float, bool, list and any type whose
        constructor accepts a string.
        """
        if value_type == bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                return value.lower() in ('true', '1', 'yes', 'on')
            return bool(value)
        if value_type == list:
            if isinstance(value, list):
                return value
            if isinstance(value, str) and value.startswith('[') and value.endswith(']'):
                try:
                    return list(ast.literal_eval(value))
                except (ValueError, SyntaxError):
                    pass
            return [value]
        try:
            return value_type(value)
        except (ValueError, TypeError) as e:
            raise ArgumentError(f"Cannot convert '{value}' to {value_type.__name__}: {e}")

    def _get_argument_info(self, cmd_name: str, arg_name: str) -> Optional[Dict[str, Any]]:
        """Get argument information for a command"""
        for arg_spec in self.command_args.get(cmd_name, []):
            if arg_spec['name'] == arg_name or arg_name in arg_spec.get('aliases', []):
                return arg_spec
        return None

    def _store(self, arg_spec: Dict[str, Any], value: Any):
        """Store a parsed value, appending for list arguments"""
        name = arg_spec['name']
        if arg_spec.get('type') == list:
            items = self._cast_value(value, list)
            current = self.kwargs.get(name) if name in self.explicit else None
            self.kwargs[name] = list(current or []) + items
        else:
            self.kwargs[name] = self._cast_value(value, arg_spec.get('type', str))
        self.explicit.add(name)

    def parse(self, args: List[str]) -> Dict[str, Any]:
        """Parse the argument list and dispatch to the command's method"""
        self.kwargs = {}
        self.current_command = None
        self.help_requested = False
        self.explicit = set()

        if not args or args[0] in ['--help', '-h', 'help']:
            self.help_requested = True
            self.print_help(args[1] if len(args) > 1 else '')
            return {}

        cmd_name = args[0]
        if cmd_name not in self.commands:
            raise ArgumentError(f"Unknown command '{' '.join(args)}'")

        self.current_command = cmd_name
        remaining_args = args[1:]
        if '--help' in remaining_args or '-h' in remaining_args:
            self.help_requested = True
            self.print_command_help(cmd_name)
            return {}

        self._parse_command_args(cmd_name, remaining_args)
        return self._handle_command(cmd_name)

    def _parse_command_args(self, cmd_name: str, args: List[str]):
        """Parse arguments for a specific command"""
        arg_specs = self.command_args.get(cmd_name, [])

        for arg_spec in arg_specs:
            if 'default' in arg_spec:
                self.kwargs[arg_spec['name']] = arg_spec['default']

        positional_args = [spec for spec in arg_specs if spec.get('pos', False)]

        i = 0
        pos_index = 0
        while i < len(args):
            arg = args[i]

            if arg.startswith('--'):
                if '=' in arg:
                    key, value = arg[2:].split('=', 1)
                    step = 1
                else:
                    key = arg[2:]
                    spec = self._get_argument_info(cmd_name, key)
                    if spec is not None and spec.get('type') == bool and \
                            (i + 1 >= len(args) or args[i + 1].startswith(('-', '+'))):
                        value, step = True, 1
                    elif i + 1 < len(args):
                        value, step = args[i + 1], 2
                    else:
                        raise ArgumentError(f"Argument '{key}' requires a value", cmd_name)
                spec = self._get_argument_info(cmd_name, key)
                if spec is None:
                    raise ArgumentError(f"Unknown argument '{key}'", cmd_name)
                self._store(spec, value)
                i += step
                continue

            if arg[:1] in '+-' and len(arg) > 1 and not _looks_numeric(arg):
                key = arg[1:]
                spec = self._get_argument_info(cmd_name, key)
                if spec is not None and spec.get('type') == bool:
                    self.kwargs[spec['name']] = arg[0] == '+'
                    self.explicit.add(spec['name'])
                    i += 1
                    continue
                if spec is not None and arg[0] == '-' and i + 1 < len(args):
                    self._store(spec, args[i + 1])
                    i += 2
                    continue
                raise ArgumentError(f"Unknown argument '{key}'", cmd_name)

            if '=' in arg:
                key, value = arg.split('=', 1)
                spec = self._get_argument_info(cmd_name, key)
                if spec is not None:
                    self._store(spec, value)
                    i += 1
                    continue

            if pos_index < len(positional_args):
                # A positional list swallows the remaining positionals
                self._store(positional_args[pos_index], arg)
                if positional_args[pos_index].get('type') != list:
                    pos_index += 1
            else:
                raise ArgumentError(f"Unexpected positional argument '{arg}'", cmd_name)
            i += 1

        for arg_spec in arg_specs:
            if arg_spec.get('required', False) and self.kwargs.get(arg_spec['name']) is None:
                raise ArgumentError(f"Required argument '{arg_spec['name']}' not provided", cmd_name)

        for arg_spec in arg_specs:
            choices = arg_spec.get('choices')
            value = self.kwargs.get(arg_spec['name'])
            if choices and value is not None and value not in choices:
                raise ArgumentError(
                    f"Argument '{arg_spec['name']}' must be one of {choices}, got: {value}", cmd_name)

    def _handle_command(self, cmd_name: str) -> Dict[str, Any]:
        """Call the method named after the command, if it exists"""
        method_name = cmd_name.replace('-', '_')
        if hasattr(self, method_name):
            getattr(self, method_name)()
        return self.kwargs

    def print_help(self, target: str = ""):
        """Print help information"""
        if not target:
            self.print_general_help()
        elif target in self.commands:
            self.print_command_help(target)
        else:
            print(f"No help available for '{target}'")

    def print_general_help(self):
        """Print general help showing all available commands"""
        print("Usage: [command] [options]")
        print()
        if self.commands:
            print("Available commands:")
            for cmd_name, cmd in self.commands.items():
                print(f"  {cmd_name:<15} {cmd.get('msg', '')}")
            print()
        print("Use 'help [command]' or '[command] --help' for more information")

    def print_command_help(self, cmd_name: str):
        """Print help for a specific command, listing every argument with its default"""
        cmd = self.commands.get(cmd_name)
        if cmd is None:
            print(f"Command '{cmd_name}' not found")
            return
        print(f"Command: {cmd_name}")
        if cmd.get('msg'):
            print(f"Description: {cmd['msg']}")
        print()

        args = self.command_args.get(cmd_name, [])
        if not args:
            print("No arguments defined for this command")
            return
        print("Arguments:")
        positional = [arg for arg in args if arg.get('pos', False)]
        optional = [arg for arg in args if not arg.get('pos', False)]
        if positional:
            print("  Positional arguments:")
            for arg in positional:
                self._print_argument_help(arg, "    ")
        if optional:
            print("  Optional arguments:")
            for arg in optional:
                self._print_argument_help(arg, "    ")

    def _print_argument_help(self, arg: Dict[str, Any], indent: str = ""):
        """Print help for a single argument"""
        name = arg['name']
        if arg.get('pos', False):
            arg_display = name
        else:
            arg_display = f"--{name}"
            aliases = arg.get('aliases', [])
            if aliases:
                arg_display += ', ' + ', '.join(f"-{a}" if len(a) == 1 else f"--{a}" for a in aliases)
            if arg.get('type') == bool:
                arg_display += f", +{name}, -{name}"
        print(f"{indent}{arg_display}")
        print(f"{indent}  {arg.get('msg', 'No description')}")

        details = []
        if arg.get('required', False):
            details.append("required")
        details.append(f"default: {arg.get('default')}")
        if arg.get('choices'):
            details.append(f"choices: {arg['choices']}")
        details.append(f"type: {arg.get('type', str).__name__}")
        print(f"{indent}  ({', '.join(details)})")

    def define_options(self):
        """Override this method to define your command structure"""


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False
